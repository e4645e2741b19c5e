/** Job polling with monotone-progress verification. */

import { ApiClient, JobStatus } from "./api.js";

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onUpdate?: (status: JobStatus) => void;
}

const PHASE_ORDER = ["queued", "inverting", "masking", "denoising", "done", "failed"];

export class NonMonotoneJobError extends Error {}

export async function pollJob(
  api: ApiClient,
  jobId: string,
  options: PollOptions = {},
): Promise<JobStatus> {
  const interval = options.intervalMs ?? 250;
  const deadline = Date.now() + (options.timeoutMs ?? 10 * 60 * 1000);
  let lastPhase = -1;
  let lastStep = -1;
  for (;;) {
    const status = await api.getJob(jobId);
    const phaseIndex = PHASE_ORDER.indexOf(status.phase);
    if (phaseIndex < lastPhase) {
      throw new NonMonotoneJobError(
        `job ${jobId} moved backwards: ${PHASE_ORDER[lastPhase]} -> ${status.phase}`,
      );
    }
    if (status.progress) {
      const [step] = status.progress;
      if (phaseIndex === lastPhase && step < lastStep) {
        throw new NonMonotoneJobError(`job ${jobId} progress moved backwards`);
      }
      lastStep = step;
    }
    lastPhase = phaseIndex;
    options.onUpdate?.(status);
    if (status.phase === "done" || status.phase === "failed") return status;
    if (Date.now() > deadline) throw new Error(`job ${jobId} timed out`);
    await new Promise((resolve) => setTimeout(resolve, interval));
  }
}
