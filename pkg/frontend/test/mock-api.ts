/**
 * In-memory mock of the documented service API, exposed as a fetch
 * implementation. Contract fidelity over realism: status codes, payload
 * shapes, job phase sequences, and artifact addressing match the real
 * service; the imagery is synthetic.
 */

import { PNG } from "pngjs";

interface MockJob {
  job_id: string;
  kind: string;
  phase: string;
  progress: [number, number] | null;
  error: string | null;
  result: Record<string, unknown>;
  transitions: [string, number][];
  /** phases still to traverse; each poll advances one */
  script: string[];
  onDone?: () => void;
}

interface MockTurn {
  object_token: string;
  color_id: string;
  input_hash: string | null;
  config: Record<string, number>;
  output_artifact: string;
  mask_artifact: string;
  mask_degraded: boolean;
  warnings: string[];
  counters: { value_alignment_steps: number[]; preservation_steps: number[] };
  seconds: number;
}

interface MockSession {
  session_id: string;
  source: Record<string, unknown>;
  config: Record<string, number>;
  status: string;
  mask_candidates: unknown[];
  turns: MockTurn[];
  prep_job?: string;
  source_artifact?: string;
}

function solidPng(size: number, rgb: [number, number, number]): Uint8Array {
  const png = new PNG({ width: size, height: size });
  for (let i = 0; i < size * size; i++) {
    png.data[i * 4 + 0] = rgb[0];
    png.data[i * 4 + 1] = rgb[1];
    png.data[i * 4 + 2] = rgb[2];
    png.data[i * 4 + 3] = 255;
  }
  return new Uint8Array(PNG.sync.write(png));
}

export function maskPng(size: number, box: [number, number, number, number]): Uint8Array {
  const png = new PNG({ width: size, height: size });
  const [x0, y0, x1, y1] = box;
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const on = x >= x0 && x < x1 && y >= y0 && y < y1 ? 255 : 0;
      const i = (y * size + x) * 4;
      png.data[i] = png.data[i + 1] = png.data[i + 2] = on;
      png.data[i + 3] = 255;
    }
  }
  return new Uint8Array(PNG.sync.write(png));
}

export class MockApi {
  jobs = new Map<string, MockJob>();
  sessions = new Map<string, MockSession>();
  colors = new Map<string, { color_id: string; content_hash: string; status: string; job_id: string | null }>();
  artifacts = new Map<string, Uint8Array>();
  colorHashes = new Map<string, string>();
  /** every request, for contract assertions */
  requests: { method: string; path: string; body?: unknown }[] = [];
  readonly imageSize = 64;
  readonly steps = 4;
  private counter = 0;
  /** candidate boxes served by the mask endpoint */
  candidateBoxes: [number, number, number, number][] = [
    [8, 8, 40, 40],
    [4, 4, 60, 60],
    [20, 20, 28, 28],
  ];

  private id(prefix: string): string {
    this.counter += 1;
    return `${prefix}-${this.counter}`;
  }

  private putArtifact(bytes: Uint8Array): string {
    const digest = `art-${this.counter++}-${bytes.length}`;
    this.artifacts.set(digest, bytes);
    return digest;
  }

  private startJob(kind: string, script: string[], onDone?: () => void): MockJob {
    const job: MockJob = {
      job_id: this.id("job"),
      kind,
      phase: "queued",
      progress: null,
      error: null,
      result: {},
      transitions: [["queued", Date.now() / 1000]],
      script,
      onDone,
    };
    this.jobs.set(job.job_id, job);
    return job;
  }

  private pollAdvance(job: MockJob): void {
    const next = job.script.shift();
    if (!next) return;
    job.phase = next;
    job.transitions.push([next, Date.now() / 1000]);
    if (next === "denoising") job.progress = [this.steps, this.steps];
    if (next === "done") job.onDone?.();
  }

  /** fetch-compatible entry point */
  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const url = new URL(input, "http://mock");
    const path = url.pathname;
    const method = (init?.method ?? "GET").toUpperCase();
    const record: { method: string; path: string; body?: unknown } = { method, path };
    this.requests.push(record);

    if (method === "POST" && path === "/colors") {
      const form = init?.body as FormData;
      const colorId = String(form.get("color_id"));
      const blob = form.get("image") as Blob;
      const bytes = new Uint8Array(await blob.arrayBuffer());
      const hash = `hash-${colorId}-${bytes.length}`;
      const existing = this.colors.get(colorId);
      if (existing) {
        if (existing.content_hash !== hash) {
          return json(409, { detail: `color '${colorId}' already registered` });
        }
        return json(200, existing);
      }
      this.artifacts.set(hash, bytes); // palette thumbnails resolve the hash
      const job = this.startJob("extract-color", ["inverting", "done"], () => {
        const rec = this.colors.get(colorId);
        if (rec) rec.status = "ready";
      });
      const recordColor = { color_id: colorId, content_hash: hash, status: "extracting", job_id: job.job_id };
      this.colors.set(colorId, recordColor);
      return json(202, recordColor);
    }

    if (method === "GET" && path === "/colors") {
      return json(200, [...this.colors.values()]);
    }

    if (method === "POST" && path === "/sessions") {
      let payload: { source: Record<string, unknown>; config?: Record<string, number> };
      if (init?.body instanceof FormData) {
        payload = JSON.parse(String(init.body.get("payload")));
        const image = init.body.get("image");
        if (payload.source["kind"] === "real" && !image) {
          return json(422, { detail: [{ field: "image", error: "real sources need an image upload" }] });
        }
      } else {
        payload = JSON.parse(String(init?.body));
      }
      const config = { steps: this.steps, ...(payload.config ?? {}) };
      const problems = validateConfigLikeServer(config);
      if (problems.length) return json(422, { detail: problems });
      const session: MockSession = {
        session_id: this.id("sess"),
        source: payload.source,
        config,
        status: "preparing",
        mask_candidates: [],
        turns: [],
      };
      const job = this.startJob("prepare-session", ["denoising", "done"], () => {
        session.status = "ready";
        session.source_artifact = this.putArtifact(solidPng(this.imageSize, [90, 120, 150]));
      });
      session.prep_job = job.job_id;
      this.sessions.set(session.session_id, session);
      return json(200, session);
    }

    const sessionMatch = path.match(/^\/sessions\/([^/]+)$/);
    if (method === "GET" && sessionMatch) {
      const session = this.sessions.get(sessionMatch[1]!);
      return session ? json(200, session) : json(404, { detail: "session not found" });
    }

    const maskMatch = path.match(/^\/sessions\/([^/]+)\/mask$/);
    if (method === "POST" && maskMatch) {
      const session = this.sessions.get(maskMatch[1]!);
      if (!session) return json(404, { detail: "session not found" });
      if (session.status !== "ready") {
        return json(409, { detail: { error: "session is preparing", job_id: session.prep_job } });
      }
      const body = JSON.parse(String(init?.body));
      record.body = body;
      const candidates = this.candidateBoxes.map((box) =>
        this.putArtifact(maskPng(this.imageSize, box)),
      );
      const entry = {
        point: body.point,
        object_token: body.object_token ?? null,
        candidates,
        selected_index: 0,
        selected_artifact: candidates[0]!,
        score: 0.125,
        degraded: false,
      };
      session.mask_candidates.push(entry);
      return json(200, entry);
    }

    const turnsMatch = path.match(/^\/sessions\/([^/]+)\/turns$/);
    if (method === "POST" && turnsMatch) {
      const session = this.sessions.get(turnsMatch[1]!);
      if (!session) return json(404, { detail: "session not found" });
      if (session.status !== "ready") {
        return json(409, { detail: { error: "session is preparing", job_id: session.prep_job } });
      }
      const body = JSON.parse(String(init?.body));
      record.body = body;
      const color = this.colors.get(body.color_id);
      if (!color) return json(404, { detail: `color '${body.color_id}' not registered` });
      if (color.status !== "ready") {
        return json(409, { detail: { error: `color asset is ${color.status}`, job_id: color.job_id } });
      }
      const overrides = body.overrides ?? {};
      const problems = validateConfigLikeServer({ steps: this.steps, ...overrides });
      if (problems.length) return json(422, { detail: problems });
      const job = this.startJob("edit-turn", ["masking", "denoising", "done"], () => {
        const shade = 40 * (session.turns.length + 1);
        session.turns.push({
          object_token: body.object_token,
          color_id: body.color_id,
          input_hash: session.source_artifact ?? null,
          config: { steps: this.steps, ...overrides },
          output_artifact: this.putArtifact(solidPng(this.imageSize, [shade, 30, 200])),
          mask_artifact:
            body.mask_artifact ?? this.putArtifact(maskPng(this.imageSize, [8, 8, 40, 40])),
          mask_degraded: false,
          warnings: [],
          counters: { value_alignment_steps: [4], preservation_steps: [1] },
          seconds: 0.01,
        });
      });
      return json(200, { job_id: job.job_id, config: { steps: this.steps, ...overrides } });
    }

    const jobMatch = path.match(/^\/jobs\/([^/]+)$/);
    if (method === "GET" && jobMatch) {
      const job = this.jobs.get(jobMatch[1]!);
      if (!job) return json(404, { detail: "job not found" });
      this.pollAdvance(job);
      const { script: _script, onDone: _onDone, ...payload } = job;
      return json(200, payload);
    }

    const artifactMatch = path.match(/^\/artifacts\/([^/]+)$/);
    if (method === "GET" && artifactMatch) {
      const bytes = this.artifacts.get(artifactMatch[1]!);
      if (!bytes) return json(404, { detail: "artifact not found" });
      return new Response(copyBytes(bytes), {
        status: 200,
        headers: { "content-type": "image/png" },
      });
    }

    return json(404, { detail: `no route ${method} ${path}` });
  };
}

function copyBytes(bytes: Uint8Array): ArrayBuffer {
  const out = new ArrayBuffer(bytes.byteLength);
  new Uint8Array(out).set(bytes);
  return out;
}

/** Server-side range rules mirrored by the mock for contract tests. */
function validateConfigLikeServer(config: Record<string, number>): { error: string }[] {
  const problems: { error: string }[] = [];
  const ratio = config["blend_ratio"];
  if (ratio !== undefined && (ratio < 0 || ratio > 1)) {
    problems.push({ error: `blend_ratio must be in [0, 1], got ${ratio}` });
  }
  const window = config["preservation_window"];
  const steps = config["steps"] ?? 50;
  if (window !== undefined && (window < 0 || window > steps)) {
    problems.push({ error: `preservation_window must be in [0, steps], got ${window}` });
  }
  const fraction = config["align_fraction"];
  if (fraction !== undefined && (fraction < 0 || fraction > 1)) {
    problems.push({ error: `align_fraction must be in [0, 1], got ${fraction}` });
  }
  return problems;
}

function json(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "content-type": "application/json" },
  });
}
