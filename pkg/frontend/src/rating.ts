/** The anonymized rating game: show image k, take a 0-10 score, submit,
 * advance. Advancing is only possible through a successful submission; a
 * reload resumes at the first unrated image via the local draft. The view
 * never receives group information (the service does not expose any). */

import { ApiClient, ApiError } from "./api";
import type { DraftStore } from "./storage";

export interface RatingView {
  sessionId: string;
  index: number; // 0-based position of the image on screen
  total: number;
  score: number;
  done: boolean;
  error: string | null;
  imageId: string | null;
}

export class RatingFlow {
  private sessionId = "";
  private total = 0;
  private index = 0;
  private imageId: string | null = null;
  private imageBlob: Blob | null = null;
  score = 5;
  error: string | null = null;
  done = false;

  constructor(
    private readonly api: ApiClient,
    private readonly store: DraftStore,
    private readonly playerId: string,
  ) {}

  view(): RatingView {
    return {
      sessionId: this.sessionId,
      index: this.index,
      total: this.total,
      score: this.score,
      done: this.done,
      error: this.error,
      imageId: this.imageId,
    };
  }

  get currentImageBlob(): Blob | null {
    return this.imageBlob;
  }

  /** Create a session or resume the drafted one at its first unrated image. */
  async start(): Promise<void> {
    const draft = this.store.loadRating();
    if (draft && draft.playerId === this.playerId && draft.rated < draft.total) {
      this.sessionId = draft.sessionId;
      this.total = draft.total;
      this.index = draft.rated;
    } else {
      const session = await this.api.createSession(this.playerId);
      this.sessionId = session.session_id;
      this.total = session.image_count;
      this.index = 0;
      this.store.saveRating({
        sessionId: this.sessionId,
        playerId: this.playerId,
        total: this.total,
        rated: 0,
      });
    }
    await this.loadCurrent();
  }

  private async loadCurrent(): Promise<void> {
    if (this.index >= this.total) {
      this.done = true;
      this.imageId = null;
      this.imageBlob = null;
      this.store.clearRating();
      return;
    }
    const { imageId, data } = await this.api.fetchImage(this.sessionId, this.index);
    this.imageId = imageId;
    this.imageBlob = data;
  }

  /** Submit the chosen score for the on-screen image; advance on success. */
  async submit(score: number): Promise<void> {
    if (this.done || this.imageId === null) {
      throw new Error("no image on screen");
    }
    if (!Number.isInteger(score) || score < 0 || score > 10) {
      throw new Error(`score must be an integer in [0, 10], got ${score}`);
    }
    this.error = null;
    try {
      await this.api.submitRating(this.sessionId, this.imageId, score);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // already rated (e.g. double-click after a lost response): advance
      } else {
        this.error = err instanceof Error ? err.message : String(err);
        throw err;
      }
    }
    this.index += 1;
    this.store.saveRating({
      sessionId: this.sessionId,
      playerId: this.playerId,
      total: this.total,
      rated: this.index,
    });
    await this.loadCurrent();
  }
}

/** Imperative DOM view over a RatingFlow. */
export class RatingPanel {
  readonly root: HTMLElement;
  private readonly image: HTMLImageElement;
  private readonly slider: HTMLInputElement;
  private readonly scoreLabel: HTMLElement;
  private readonly progress: HTMLElement;
  private readonly submitBtn: HTMLButtonElement;
  private readonly banner: HTMLElement;
  private readonly thanks: HTMLElement;
  private objectUrl: string | null = null;

  constructor(private readonly flow: RatingFlow, doc: Document = document) {
    this.root = doc.createElement("section");
    this.root.className = "rating-panel";
    this.progress = doc.createElement("div");
    this.progress.className = "progress";
    this.image = doc.createElement("img");
    this.image.className = "rating-image";
    this.image.alt = "floorplan to rate";
    this.scoreLabel = doc.createElement("span");
    this.scoreLabel.className = "score-label";
    this.slider = doc.createElement("input");
    this.slider.type = "range";
    this.slider.min = "0";
    this.slider.max = "10";
    this.slider.step = "1";
    this.slider.value = "5";
    this.slider.addEventListener("input", () => {
      this.scoreLabel.textContent = this.slider.value;
    });
    this.submitBtn = doc.createElement("button");
    this.submitBtn.textContent = "Submit score";
    this.submitBtn.addEventListener("click", () => void this.onSubmit());
    this.banner = doc.createElement("div");
    this.banner.className = "banner hidden";
    const retry = doc.createElement("button");
    retry.textContent = "Retry";
    retry.addEventListener("click", () => void this.onSubmit());
    this.banner.append("Connection trouble. Your progress is saved. ", retry);
    this.thanks = doc.createElement("div");
    this.thanks.className = "thanks hidden";
    this.thanks.textContent =
      "All 30 images rated. Thank you for contributing your expertise!";
    const controls = doc.createElement("div");
    controls.className = "controls";
    controls.append(this.slider, this.scoreLabel, this.submitBtn);
    this.root.append(this.progress, this.image, controls, this.banner, this.thanks);
  }

  async start(): Promise<void> {
    await this.flow.start();
    this.render();
  }

  private async onSubmit(): Promise<void> {
    this.submitBtn.disabled = true;
    try {
      await this.flow.submit(Number(this.slider.value));
      this.banner.classList.add("hidden");
    } catch {
      this.banner.classList.remove("hidden");
    } finally {
      this.submitBtn.disabled = false;
      this.render();
    }
  }

  render(): void {
    const view = this.flow.view();
    this.progress.textContent = view.done
      ? "complete"
      : `image ${view.index + 1} / ${view.total}`;
    this.scoreLabel.textContent = this.slider.value;
    this.image.classList.toggle("hidden", view.done);
    this.submitBtn.disabled = view.done;
    this.thanks.classList.toggle("hidden", !view.done);
    const blob = this.flow.currentImageBlob;
    if (blob && typeof URL.createObjectURL === "function") {
      if (this.objectUrl) URL.revokeObjectURL(this.objectUrl);
      this.objectUrl = URL.createObjectURL(blob);
      this.image.src = this.objectUrl;
    }
  }
}
