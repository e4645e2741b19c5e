/** Entry point wiring the store to the page regions. */

import { ApiClient } from "./api.js";
import { ClientSession } from "./session.js";
import {
  renderBanners,
  renderMaskOverlay,
  renderPalette,
  renderParameterControls,
  renderTurnCards,
} from "./ui.js";

export interface AppElements {
  canvas: HTMLElement;
  palette: HTMLElement;
  controls: HTMLElement;
  history: HTMLElement;
  banners: HTMLElement;
  overlay: HTMLElement;
}

export class App {
  readonly session: ClientSession;

  constructor(
    readonly api: ApiClient,
    readonly elements: AppElements,
  ) {
    this.session = new ClientSession(api);
  }

  async start(source: { seed: number; prompt: string } | { image: Blob; prompt: string }) {
    await this.session.start(source);
    this.renderAll();
    this.elements.canvas.addEventListener("click", (event) => {
      const e = event as MouseEvent;
      void this.handleClick(e.offsetX, e.offsetY);
    });
  }

  async handleClick(x: number, y: number, objectToken: string | null = null): Promise<void> {
    const mask = await this.session.selectObject([Math.round(x), Math.round(y)], objectToken);
    renderMaskOverlay(this.elements.overlay, this.api, {
      maskArtifact: this.session.currentMaskArtifact() ?? mask.selected_artifact,
      score: mask.score,
      degraded: mask.degraded,
    });
    this.renderAll();
  }

  cycleCandidate(): void {
    this.session.cycleCandidate();
    const artifact = this.session.currentMaskArtifact();
    if (artifact) {
      renderMaskOverlay(this.elements.overlay, this.api, {
        maskArtifact: artifact,
        score: this.session.maskCandidates?.score ?? null,
        degraded: this.session.maskCandidates?.degraded ?? false,
      });
    }
  }

  async refreshPalette(): Promise<void> {
    const colors = await this.api.listColors();
    renderPalette(this.elements.palette, this.api, colors, (colorId) => {
      this.session.activeColor = colorId;
    });
  }

  async submitTurn(objectToken: string): Promise<void> {
    if (!this.session.activeColor) {
      this.session.banners.push({ kind: "error", message: "pick a color first" });
      this.renderAll();
      return;
    }
    await this.session.submitTurn(this.session.activeColor, objectToken, () => {
      renderTurnCards(this.elements.history, this.api, this.session);
      renderBanners(this.elements.banners, this.session);
    });
    this.renderAll();
  }

  renderAll(): void {
    renderTurnCards(this.elements.history, this.api, this.session);
    renderBanners(this.elements.banners, this.session);
    renderParameterControls(this.elements.controls, this.session, (message) => {
      this.session.banners.push({ kind: "error", message });
      renderBanners(this.elements.banners, this.session);
    });
  }
}
