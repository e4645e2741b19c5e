/**
 * DOM rendering. Everything displayed is copied verbatim from API payloads;
 * these functions only arrange it.
 */

import { ApiClient, ColorRecord } from "./api.js";
import { boundFor, EditConfig } from "./config.js";
import { ClientSession, TurnCard } from "./session.js";

export function renderPalette(
  container: HTMLElement,
  api: ApiClient,
  colors: ColorRecord[],
  onPick: (colorId: string) => void,
): void {
  container.replaceChildren();
  for (const color of colors) {
    const button = document.createElement("button");
    button.className = `palette-swatch status-${color.status}`;
    button.dataset.colorId = color.color_id;
    button.title = `${color.color_id} (${color.status})`;
    // decoded thumbnail: distinct reference images of one hue stay tellable
    const img = document.createElement("img");
    img.alt = color.color_id;
    img.src = api.artifactUrl(color.content_hash);
    button.append(img, document.createTextNode(color.color_id));
    button.addEventListener("click", () => onPick(color.color_id));
    container.append(button);
  }
}

export function renderParameterControls(
  container: HTMLElement,
  session: ClientSession,
  onProblem: (message: string) => void,
): void {
  container.replaceChildren();
  const fields: (keyof EditConfig)[] = [
    "steps",
    "guidance_scale",
    "align_fraction",
    "blend_ratio",
    "preservation_window",
    "turns",
  ];
  for (const field of fields) {
    const label = document.createElement("label");
    label.textContent = field;
    const input = document.createElement("input");
    input.type = "number";
    input.name = field;
    const bounds = boundFor(field, session.config);
    input.min = String(bounds.min);
    input.max = String(bounds.max);
    input.value = String(session.config[field]);
    input.addEventListener("change", () => {
      const problem = session.setConfigField(field, Number(input.value));
      if (problem) {
        input.value = String(session.config[field]); // reject: restore committed value
        input.classList.add("invalid");
        onProblem(problem.message);
      } else {
        input.classList.remove("invalid");
        const refreshed = boundFor(field, session.config);
        input.min = String(refreshed.min);
        input.max = String(refreshed.max);
      }
    });
    label.append(input);
    container.append(label);
  }
}

/** Before/after wipe comparison; the slider drives the clip width. */
export function renderCompareSlider(
  api: ApiClient,
  before: string | null,
  after: string,
): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "compare";
  const afterImg = document.createElement("img");
  afterImg.className = "compare-after";
  afterImg.src = api.artifactUrl(after);
  const beforeImg = document.createElement("img");
  beforeImg.className = "compare-before";
  if (before) beforeImg.src = api.artifactUrl(before);
  const slider = document.createElement("input");
  slider.type = "range";
  slider.min = "0";
  slider.max = "100";
  slider.value = "50";
  slider.addEventListener("input", () => {
    beforeImg.style.clipPath = `inset(0 ${100 - Number(slider.value)}% 0 0)`;
  });
  wrap.append(afterImg, beforeImg, slider);
  return wrap;
}

export function renderTurnCards(
  container: HTMLElement,
  api: ApiClient,
  session: ClientSession,
): void {
  container.replaceChildren();
  for (const card of session.cards) {
    container.append(renderTurnCard(api, card));
  }
  if (session.pending) {
    const pending = document.createElement("div");
    pending.className = "turn-card pending";
    pending.dataset.jobId = session.pending.jobId;
    const progress = session.pending.progress
      ? ` step ${session.pending.progress[0]}/${session.pending.progress[1]}`
      : "";
    pending.textContent = `pending: ${session.pending.objectToken} -> ${session.pending.colorId} (${session.pending.phase}${progress})`;
    container.append(pending);
  }
}

function renderTurnCard(api: ApiClient, card: TurnCard): HTMLElement {
  const element = document.createElement("article");
  element.className = "turn-card committed";
  element.dataset.turnIndex = String(card.index);
  element.dataset.branch = String(card.branch);
  const title = document.createElement("h3");
  title.textContent = `turn ${card.index + 1}: ${card.record.object_token} -> ${card.record.color_id}`;
  if (card.branch > 0) {
    const badge = document.createElement("span");
    badge.className = "branch-badge";
    badge.textContent = `branch ${card.branch}`;
    title.append(badge);
  }
  const meta = document.createElement("dl");
  for (const [key, value] of [
    ["alignment steps", card.record.counters.value_alignment_steps.join(", ")],
    ["preservation steps", card.record.counters.preservation_steps.join(", ")],
    ["seconds", String(card.record.seconds)],
  ]) {
    const dt = document.createElement("dt");
    dt.textContent = key ?? "";
    const dd = document.createElement("dd");
    dd.textContent = value ?? "";
    meta.append(dt, dd);
  }
  if (card.record.mask_degraded) {
    const flag = document.createElement("p");
    flag.className = "mask-fallback";
    flag.textContent = "attention-mask fallback";
    element.append(flag);
  }
  element.append(title, renderCompareSlider(api, card.beforeArtifact, card.afterArtifact), meta);
  return element;
}

export function renderBanners(container: HTMLElement, session: ClientSession): void {
  container.replaceChildren();
  for (const banner of session.banners) {
    const div = document.createElement("div");
    div.className = `banner banner-${banner.kind}`;
    div.textContent = banner.message + (banner.jobId ? ` (job ${banner.jobId})` : "");
    container.append(div);
  }
}

export interface OverlayState {
  maskArtifact: string;
  score: number | null;
  degraded: boolean;
}

export function renderMaskOverlay(
  container: HTMLElement,
  api: ApiClient,
  state: OverlayState,
): HTMLElement {
  container.replaceChildren();
  const overlay = document.createElement("div");
  overlay.className = "mask-overlay";
  const img = document.createElement("img");
  img.className = "mask-overlay-image";
  img.src = api.artifactUrl(state.maskArtifact);
  img.dataset.artifact = state.maskArtifact;
  const caption = document.createElement("span");
  caption.className = "mask-overlay-caption";
  caption.textContent = state.degraded
    ? "attention-mask fallback"
    : state.score === null
      ? "selected candidate"
      : `selection score ${state.score}`;
  overlay.append(img, caption);
  container.append(overlay);
  return overlay;
}
