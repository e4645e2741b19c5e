/**
 * Mask PNG handling for overlays. Decoding happens here (pngjs) so the
 * overlay pixels can be compared byte-for-byte against what the API served,
 * independent of any canvas implementation.
 */

import { PNG } from "pngjs";

export interface DecodedMask {
  width: number;
  height: number;
  /** row-major foreground flags */
  data: Uint8Array;
}

export function decodeMaskPng(bytes: Uint8Array): DecodedMask {
  const png = PNG.sync.read(Buffer.from(bytes));
  const flags = new Uint8Array(png.width * png.height);
  for (let i = 0; i < flags.length; i++) {
    // white foreground on any channel; 1-bit PNGs expand to 0/255 RGBA
    flags[i] = (png.data[i * 4] ?? 0) > 127 ? 1 : 0;
  }
  return { width: png.width, height: png.height, data: flags };
}

export function maskArea(mask: DecodedMask): number {
  let area = 0;
  for (const flag of mask.data) area += flag;
  return area;
}

export function sameMask(a: DecodedMask, b: DecodedMask): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.data.length; i++) {
    if (a.data[i] !== b.data[i]) return false;
  }
  return true;
}

/**
 * RGBA overlay pixels for a decoded mask: translucent highlight on the
 * foreground, transparent elsewhere. Pure data; the DOM layer just blits it.
 */
export function overlayPixels(
  mask: DecodedMask,
  rgba: [number, number, number, number] = [66, 133, 244, 112],
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(mask.width * mask.height * 4);
  for (let i = 0; i < mask.data.length; i++) {
    if (mask.data[i]) {
      out[i * 4 + 0] = rgba[0];
      out[i * 4 + 1] = rgba[1];
      out[i * 4 + 2] = rgba[2];
      out[i * 4 + 3] = rgba[3];
    }
  }
  return out;
}

/** Wrap-around candidate cycling. */
export function cycleIndex(current: number, count: number, step: 1 | -1 = 1): number {
  if (count <= 0) return 0;
  return (current + step + count) % count;
}
