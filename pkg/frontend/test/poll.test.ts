/** Job polling: monotone phases, progress forwarding, failure surfacing. */

import { describe, expect, it } from "vitest";

import { ApiClient, JobStatus } from "../src/api.js";
import { NonMonotoneJobError, pollJob } from "../src/poll.js";
import { MockApi } from "./mock-api.js";

describe("job polling", () => {
  it("reaches done through monotone phases", async () => {
    const mock = new MockApi();
    const api = new ApiClient("", mock.fetch);
    const record = await api.registerColor("c", new Blob([new Uint8Array([1])]));
    const seen: string[] = [];
    const finished = await pollJob(api, record.job_id!, {
      intervalMs: 1,
      onUpdate: (status) => seen.push(status.phase),
    });
    expect(finished.phase).toBe("done");
    const order = ["queued", "inverting", "masking", "denoising", "done", "failed"];
    const indices = seen.map((p) => order.indexOf(p));
    expect([...indices].sort((a, b) => a - b)).toEqual(indices);
    const times = finished.transitions.map(([, t]) => t);
    expect([...times].sort((a, b) => a - b)).toEqual(times);
  });

  it("rejects a job that moves backwards", async () => {
    let calls = 0;
    const phases = ["denoising", "queued"];
    const fake = async (): Promise<Response> => {
      const status: JobStatus = {
        job_id: "j",
        kind: "x",
        phase: (phases[Math.min(calls++, phases.length - 1)] ?? "queued") as JobStatus["phase"],
        progress: null,
        error: null,
        result: {},
        transitions: [],
      };
      return new Response(JSON.stringify(status), {
        status: 200,
        headers: { "content-type": "application/json" },
      });
    };
    const api = new ApiClient("", fake);
    await expect(pollJob(api, "j", { intervalMs: 1 })).rejects.toThrow(NonMonotoneJobError);
  });

  it("returns failed jobs rather than throwing", async () => {
    const fake = async (): Promise<Response> =>
      new Response(
        JSON.stringify({
          job_id: "j",
          kind: "x",
          phase: "failed",
          progress: null,
          error: "boom",
          result: {},
          transitions: [],
        }),
        { status: 200, headers: { "content-type": "application/json" } },
      );
    const api = new ApiClient("", fake);
    const finished = await pollJob(api, "j", { intervalMs: 1 });
    expect(finished.phase).toBe("failed");
    expect(finished.error).toBe("boom");
  });
});
