/**
 * Typed client for the editing service. Every method maps 1:1 onto a
 * documented endpoint; this module performs no pipeline math and no
 * interpretation beyond JSON decoding, so everything rendered upstream is
 * verbatim server output.
 */

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface ColorRecord {
  color_id: string;
  content_hash: string;
  status: "extracting" | "ready" | "failed";
  job_id: string | null;
}

export interface JobStatus {
  job_id: string;
  kind: string;
  phase: "queued" | "inverting" | "masking" | "denoising" | "done" | "failed";
  progress: [number, number] | null;
  error: string | null;
  result: Record<string, unknown>;
  transitions: [string, number][];
}

export interface MaskResponse {
  point: [number, number];
  object_token: string | null;
  candidates: string[];
  selected_index: number;
  selected_artifact: string;
  score: number | null;
  degraded: boolean;
}

export interface TurnRecord {
  object_token: string;
  color_id: string;
  input_hash: string | null;
  config: Record<string, number | string>;
  output_artifact: string;
  mask_artifact: string;
  mask_degraded: boolean;
  warnings: string[];
  counters: { value_alignment_steps: number[]; preservation_steps: number[] };
  seconds: number;
}

export interface SessionRecord {
  session_id: string;
  source: Record<string, unknown>;
  config: Record<string, number | string>;
  status: "preparing" | "ready" | "failed";
  mask_candidates: MaskResponse[];
  turns: TurnRecord[];
  prep_job?: string;
  source_artifact?: string;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(`API error ${status}: ${JSON.stringify(detail)}`);
  }

  /** 409 payloads carry the blocking job id when one exists. */
  blockingJob(): string | null {
    if (typeof this.detail === "object" && this.detail !== null) {
      const job = (this.detail as Record<string, unknown>)["job_id"];
      if (typeof job === "string") return job;
    }
    return null;
  }
}

async function decode<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail: unknown;
    try {
      detail = (await response.json()).detail;
    } catch {
      detail = await response.text();
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  async registerColor(colorId: string, image: Blob): Promise<ColorRecord> {
    const form = new FormData();
    form.append("color_id", colorId);
    form.append("image", image, `${colorId}.png`);
    return decode(await this.fetchImpl(this.url("/colors"), { method: "POST", body: form }));
  }

  async listColors(): Promise<ColorRecord[]> {
    return decode(await this.fetchImpl(this.url("/colors")));
  }

  async startGeneratedSession(
    seed: number,
    prompt: string,
    config: Record<string, number | string> = {},
  ): Promise<SessionRecord> {
    return decode(
      await this.fetchImpl(this.url("/sessions"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ source: { kind: "generated", seed, prompt }, config }),
      }),
    );
  }

  async startRealSession(
    image: Blob,
    prompt: string,
    config: Record<string, number | string> = {},
  ): Promise<SessionRecord> {
    const form = new FormData();
    form.append("payload", JSON.stringify({ source: { kind: "real", prompt }, config }));
    form.append("image", image, "source.png");
    return decode(await this.fetchImpl(this.url("/sessions"), { method: "POST", body: form }));
  }

  async getSession(sessionId: string): Promise<SessionRecord> {
    return decode(await this.fetchImpl(this.url(`/sessions/${sessionId}`)));
  }

  async requestMask(
    sessionId: string,
    point: [number, number] | null,
    objectToken: string | null,
  ): Promise<MaskResponse> {
    return decode(
      await this.fetchImpl(this.url(`/sessions/${sessionId}/mask`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ point, object_token: objectToken }),
      }),
    );
  }

  async submitTurn(
    sessionId: string,
    body: {
      color_id: string;
      object_token: string;
      mask_artifact?: string;
      overrides?: Record<string, number | string>;
    },
  ): Promise<{ job_id: string; config: Record<string, number | string> }> {
    return decode(
      await this.fetchImpl(this.url(`/sessions/${sessionId}/turns`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
  }

  async getJob(jobId: string): Promise<JobStatus> {
    return decode(await this.fetchImpl(this.url(`/jobs/${jobId}`)));
  }

  async getArtifact(digest: string): Promise<Uint8Array> {
    const response = await this.fetchImpl(this.url(`/artifacts/${digest}`));
    if (!response.ok) throw new ApiError(response.status, await response.text());
    return new Uint8Array(await response.arrayBuffer());
  }

  artifactUrl(digest: string): string {
    return this.url(`/artifacts/${digest}`);
  }
}
