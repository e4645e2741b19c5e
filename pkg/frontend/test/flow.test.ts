/**
 * Scripted end-to-end session against the mock API: register a color,
 * start a session from an upload, click to mask, cycle candidates, run two
 * turns, and verify the history renders two ordered committed cards.
 */

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { App, AppElements } from "../src/app.js";
import { pollJob } from "../src/poll.js";
import { MockApi } from "./mock-api.js";

function elements(): AppElements {
  for (const id of ["canvas", "palette", "controls", "history", "banners", "overlay"]) {
    const div = document.createElement("div");
    div.id = id;
    document.body.append(div);
  }
  return {
    canvas: document.getElementById("canvas")!,
    palette: document.getElementById("palette")!,
    controls: document.getElementById("controls")!,
    history: document.getElementById("history")!,
    banners: document.getElementById("banners")!,
    overlay: document.getElementById("overlay")!,
  };
}

describe("scripted session", () => {
  let mock: MockApi;
  let api: ApiClient;
  let app: App;

  beforeEach(() => {
    document.body.replaceChildren();
    mock = new MockApi();
    api = new ApiClient("", mock.fetch);
    app = new App(api, elements());
  });

  async function registerColor(colorId: string): Promise<void> {
    const record = await api.registerColor(colorId, new Blob([new Uint8Array([1, 2, 3])]));
    expect(record.status).toBe("extracting");
    const done = await pollJob(api, record.job_id!, { intervalMs: 1 });
    expect(done.phase).toBe("done");
  }

  it("upload, click, candidate select, two turns -> two ordered cards", async () => {
    await registerColor("crimson");
    await registerColor("teal");
    await app.refreshPalette();
    expect(document.querySelectorAll(".palette-swatch")).toHaveLength(2);

    await app.start({ image: new Blob([new Uint8Array([9, 9])]), prompt: "a photo of a hat" });
    expect(app.session.record?.status).toBe("ready");

    await app.handleClick(24, 24, "hat");
    expect(app.session.maskCandidates?.candidates).toHaveLength(3);

    // candidate cycling moves the overlay to the next candidate mask
    app.cycleCandidate();
    expect(app.session.candidateIndex).toBe(1);

    app.session.activeColor = "crimson";
    await app.submitTurn("hat");
    app.session.activeColor = "teal";
    await app.submitTurn("hat");

    const cards = [...document.querySelectorAll<HTMLElement>(".turn-card.committed")];
    expect(cards).toHaveLength(2);
    expect(cards.map((c) => c.dataset.turnIndex)).toEqual(["0", "1"]);
    expect(cards[0]!.querySelector("h3")!.textContent).toContain("turn 1: hat -> crimson");
    expect(cards[1]!.querySelector("h3")!.textContent).toContain("turn 2: hat -> teal");
    // before/after slider present on each card
    expect(cards[0]!.querySelector(".compare input[type=range]")).toBeTruthy();
    // second card's "before" is the first card's "after"
    const firstAfter = app.session.cards[0]!.afterArtifact;
    expect(app.session.cards[1]!.beforeArtifact).toBe(firstAfter);
    // turn numbers rendered verbatim from the API payloads
    expect(cards[0]!.textContent).toContain("4");
    expect(app.session.pending).toBeNull();
  });

  it("renders only server-committed turns; pending is marked", async () => {
    await registerColor("crimson");
    await app.start({ seed: 7, prompt: "a photo of a hat" });
    await app.handleClick(10, 10, "hat");
    app.session.activeColor = "crimson";
    const submission = app.submitTurn("hat");
    // while the job polls, the history shows a clearly pending card and no
    // committed card for it
    const pendingCard = document.querySelector<HTMLElement>(".turn-card.pending");
    expect(pendingCard).toBeTruthy();
    expect(document.querySelectorAll(".turn-card.committed")).toHaveLength(0);
    await submission;
    expect(document.querySelector(".turn-card.pending")).toBeNull();
    expect(document.querySelectorAll(".turn-card.committed")).toHaveLength(1);
  });

  it("candidate cycling wraps around", async () => {
    await app.start({ seed: 3, prompt: "a photo of a hat" });
    await app.handleClick(5, 5, "hat");
    expect(app.session.candidateIndex).toBe(0);
    app.cycleCandidate();
    app.cycleCandidate();
    expect(app.session.candidateIndex).toBe(2);
    app.cycleCandidate();
    expect(app.session.candidateIndex).toBe(0); // wrapped
  });

  it("revert labels later history as a branch", async () => {
    await registerColor("crimson");
    await app.start({ seed: 5, prompt: "a photo of a hat" });
    await app.handleClick(12, 12, "hat");
    app.session.activeColor = "crimson";
    await app.submitTurn("hat");
    app.session.revertTo(0);
    await app.submitTurn("hat");
    const cards = [...document.querySelectorAll<HTMLElement>(".turn-card.committed")];
    expect(cards).toHaveLength(2);
    expect(cards[0]!.dataset.branch).toBe("0");
    expect(cards[1]!.dataset.branch).toBe("1");
    expect(cards[1]!.querySelector(".branch-badge")!.textContent).toContain("branch 1");
  });

  it("409 on a busy resource surfaces as an actionable banner", async () => {
    await app.start({ seed: 2, prompt: "a photo of a hat" });
    // color registered but never polled to completion: stays extracting
    const record = await api.registerColor("slow", new Blob([new Uint8Array([5])]));
    app.session.activeColor = "slow";
    await app.handleClick(8, 8, "hat");
    await app.submitTurn("hat");
    const banner = document.querySelector(".banner-conflict");
    expect(banner).toBeTruthy();
    expect(banner!.textContent).toContain(record.job_id!);
    expect(document.querySelectorAll(".turn-card.committed")).toHaveLength(0);
  });

  it("palette thumbnails come from artifact URLs of the registered content", async () => {
    await registerColor("crimson");
    await app.refreshPalette();
    const img = document.querySelector<HTMLImageElement>(".palette-swatch img");
    expect(img).toBeTruthy();
    expect(img!.src).toContain("/artifacts/hash-crimson");
  });
});
