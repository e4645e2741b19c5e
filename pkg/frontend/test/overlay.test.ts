/** The overlay pixels must equal the mask PNG the API served, bit for bit. */

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { cycleIndex, decodeMaskPng, maskArea, overlayPixels, sameMask } from "../src/mask.js";
import { MockApi, maskPng } from "./mock-api.js";

describe("mask decoding", () => {
  it("decodes the exact foreground the server encoded", () => {
    const bytes = maskPng(16, [2, 3, 10, 12]);
    const decoded = decodeMaskPng(bytes);
    expect(decoded.width).toBe(16);
    expect(decoded.height).toBe(16);
    expect(maskArea(decoded)).toBe((10 - 2) * (12 - 3));
    for (let y = 0; y < 16; y++) {
      for (let x = 0; x < 16; x++) {
        const expected = x >= 2 && x < 10 && y >= 3 && y < 12 ? 1 : 0;
        expect(decoded.data[y * 16 + x]).toBe(expected);
      }
    }
  });

  it("overlay equals the artifact served by the API, pixel for pixel", async () => {
    const mock = new MockApi();
    const api = new ApiClient("", mock.fetch);
    await api.registerColor("c", new Blob([new Uint8Array([1])]));
    const session = await api.startGeneratedSession(1, "a photo of a hat");
    // drain prep job
    while ((await api.getJob(session.prep_job!)).phase !== "done") {
      /* poll */
    }
    const mask = await api.requestMask(session.session_id, [8, 8], "hat");
    const served = await api.getArtifact(mask.selected_artifact);
    const decodedServed = decodeMaskPng(served);
    // what the overlay would draw
    const local = decodeMaskPng(maskPng(mock.imageSize, mock.candidateBoxes[0]!));
    expect(sameMask(decodedServed, local)).toBe(true);
    const pixels = overlayPixels(decodedServed);
    for (let i = 0; i < decodedServed.data.length; i++) {
      expect(pixels[i * 4 + 3]).toBe(decodedServed.data[i] ? 112 : 0);
    }
  });

  it("candidate cycling wraps in both directions", () => {
    expect(cycleIndex(0, 3, 1)).toBe(1);
    expect(cycleIndex(2, 3, 1)).toBe(0);
    expect(cycleIndex(0, 3, -1)).toBe(2);
    expect(cycleIndex(0, 0, 1)).toBe(0);
  });
});
