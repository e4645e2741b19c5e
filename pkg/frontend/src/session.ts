/**
 * Client-side session state. The server record is the source of truth:
 * committed turn cards come only from fetched session documents, while the
 * single in-flight submission is tracked separately and clearly pending.
 */

import { ApiClient, ApiError, MaskResponse, SessionRecord, TurnRecord } from "./api.js";
import { DEFAULT_CONFIG, EditConfig, applyOverride, ValidationProblem } from "./config.js";
import { pollJob } from "./poll.js";

export interface TurnCard {
  index: number;
  branch: number;
  record: TurnRecord;
  beforeArtifact: string | null;
  afterArtifact: string;
}

export interface PendingTurn {
  jobId: string;
  colorId: string;
  objectToken: string;
  phase: string;
  progress: [number, number] | null;
}

export interface Banner {
  kind: "error" | "conflict" | "info";
  message: string;
  jobId?: string | null;
}

export class ClientSession {
  record: SessionRecord | null = null;
  config: EditConfig = { ...DEFAULT_CONFIG };
  selectedPoint: [number, number] | null = null;
  objectToken: string | null = null;
  maskCandidates: MaskResponse | null = null;
  candidateIndex = 0;
  activeColor: string | null = null;
  pending: PendingTurn | null = null;
  banners: Banner[] = [];
  /** committed cards; branch increments when the user reverts and re-edits */
  cards: TurnCard[] = [];
  private branch = 0;
  private revertBase: number | null = null;

  constructor(private readonly api: ApiClient) {}

  get sessionId(): string {
    if (!this.record) throw new Error("session not started");
    return this.record.session_id;
  }

  setConfigField(field: keyof EditConfig, value: number): ValidationProblem | null {
    const outcome = applyOverride(this.config, field, value);
    if ("problem" in outcome) {
      return outcome.problem;
    }
    this.config = outcome.config;
    return null;
  }

  async start(source: { seed: number; prompt: string } | { image: Blob; prompt: string }) {
    const config = { ...this.config } as Record<string, number>;
    this.record =
      "seed" in source
        ? await this.api.startGeneratedSession(source.seed, source.prompt, config)
        : await this.api.startRealSession(source.image, source.prompt, config);
    if (this.record.prep_job) {
      await pollJob(this.api, this.record.prep_job);
      await this.refresh();
    }
  }

  async refresh(): Promise<void> {
    if (!this.record) return;
    this.record = await this.api.getSession(this.record.session_id);
    this.rebuildCards();
  }

  private rebuildCards(): void {
    if (!this.record) return;
    const turns = this.record.turns;
    this.cards = turns.map((record, index) => ({
      index,
      branch: this.revertBase !== null && index > this.revertBase ? this.branch : 0,
      record,
      beforeArtifact:
        index === 0
          ? (this.record!.source_artifact ?? null)
          : (turns[index - 1]?.output_artifact ?? null),
      afterArtifact: record.output_artifact,
    }));
  }

  async selectObject(point: [number, number], objectToken: string | null): Promise<MaskResponse> {
    this.selectedPoint = point;
    this.objectToken = objectToken;
    this.maskCandidates = await this.api.requestMask(this.sessionId, point, objectToken);
    this.candidateIndex = this.maskCandidates.selected_index;
    if (this.maskCandidates.degraded) {
      this.banners.push({ kind: "info", message: "attention-mask fallback" });
    }
    return this.maskCandidates;
  }

  cycleCandidate(step: 1 | -1 = 1): number {
    if (!this.maskCandidates) throw new Error("no mask candidates yet");
    const count = this.maskCandidates.candidates.length;
    this.candidateIndex = (this.candidateIndex + step + count) % count;
    return this.candidateIndex;
  }

  currentMaskArtifact(): string | null {
    if (!this.maskCandidates) return null;
    return this.maskCandidates.candidates[this.candidateIndex] ?? null;
  }

  /** Revert the next edit to build on an earlier turn; later cards stay in
   * the history labeled with the retired branch. */
  revertTo(turnIndex: number): void {
    if (turnIndex < -1 || turnIndex >= this.cards.length) {
      throw new Error(`cannot revert to turn ${turnIndex}`);
    }
    this.revertBase = turnIndex;
    this.branch += 1;
  }

  async submitTurn(
    colorId: string,
    objectToken: string,
    onUpdate?: () => void,
  ): Promise<TurnCard | null> {
    if (this.pending) {
      this.banners.push({ kind: "conflict", message: "a turn is already running" });
      onUpdate?.();
      return null;
    }
    // optimistic, clearly-pending entry; committed cards come only from the
    // server record fetched after the job finishes
    this.pending = { jobId: "", colorId, objectToken, phase: "submitting", progress: null };
    onUpdate?.();
    const mask = this.currentMaskArtifact();
    let submission;
    try {
      submission = await this.api.submitTurn(this.sessionId, {
        color_id: colorId,
        object_token: objectToken,
        ...(mask ? { mask_artifact: mask } : {}),
        overrides: { ...this.config },
      });
    } catch (error) {
      this.pending = null;
      if (error instanceof ApiError && error.status === 409) {
        this.banners.push({
          kind: "conflict",
          message: `blocked: ${JSON.stringify(error.detail)}`,
          jobId: error.blockingJob(),
        });
        onUpdate?.();
        return null;
      }
      throw error;
    }
    this.pending = {
      jobId: submission.job_id,
      colorId,
      objectToken,
      phase: "queued",
      progress: null,
    };
    onUpdate?.();
    try {
      const finished = await pollJob(this.api, submission.job_id, {
        intervalMs: 5,
        onUpdate: (status) => {
          if (this.pending) {
            this.pending.phase = status.phase;
            this.pending.progress = status.progress;
          }
          onUpdate?.();
        },
      });
      if (finished.phase === "failed") {
        this.banners.push({ kind: "error", message: finished.error ?? "turn failed" });
        return null;
      }
      await this.refresh();
      return this.cards[this.cards.length - 1] ?? null;
    } finally {
      this.pending = null;
      onUpdate?.();
    }
  }
}
