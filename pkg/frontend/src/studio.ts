/** Interactive studio: draw or stamp a footprint, write the brief, pick the
 * denoising steps and seed, generate, and iterate. Every gallery tile stores
 * the exact request (including the resolved seed and the mask) that produced
 * it, so "iterate from this" reproduces the inputs faithfully. */

import { ApiClient } from "./api";
import { MaskGrid, drawMask, maskToPng } from "./mask";
import type { JobResult, StudioRequest } from "./types";

export interface GalleryEntry {
  request: StudioRequest;
  resolvedSeed: number | null;
  mask: MaskGrid;
  images: string[]; // base64 PNGs
  warnings: string[];
}

export class StudioController {
  prompt = "";
  steps: number;
  n = 2;
  seed: number | null = null;
  mask: MaskGrid;
  gallery: GalleryEntry[] = [];
  busy = false;
  error: string | null = null;

  constructor(
    private readonly api: ApiClient,
    readonly maskSize: number,
    readonly maxSteps: number,
  ) {
    this.mask = new MaskGrid(maskSize);
    this.steps = Math.min(25, maxSteps);
  }

  canGenerate(): boolean {
    return !this.busy && this.prompt.trim().length > 0 && !this.mask.isEmpty();
  }

  request(): StudioRequest {
    return {
      prompt: this.prompt,
      steps: this.steps,
      n: this.n,
      seed: this.seed,
    };
  }

  async generate(pngBlob?: Blob): Promise<GalleryEntry> {
    if (!this.canGenerate()) {
      throw new Error("generation needs a non-empty mask and a prompt");
    }
    this.busy = true;
    this.error = null;
    try {
      const blob = pngBlob ?? (await maskToPng(this.mask));
      const jobId = await this.api.generate(this.request(), blob);
      const job: JobResult = await this.api.job(jobId);
      const entry: GalleryEntry = {
        request: this.request(),
        resolvedSeed: job.request.seed,
        mask: this.mask.clone(),
        images: job.images,
        warnings: job.warnings,
      };
      this.gallery.unshift(entry);
      return entry;
    } catch (err) {
      this.error = err instanceof Error ? err.message : String(err);
      throw err;
    } finally {
      this.busy = false;
    }
  }

  /** Copy a tile's inputs back into the controls, pinning its actual seed. */
  iterateFrom(entry: GalleryEntry): void {
    this.prompt = entry.request.prompt;
    this.steps = entry.request.steps;
    this.n = entry.request.n;
    this.seed = entry.resolvedSeed;
    this.mask = entry.mask.clone();
  }
}

export class StudioPanel {
  readonly root: HTMLElement;
  private readonly promptInput: HTMLInputElement;
  private readonly stepsSlider: HTMLInputElement;
  private readonly stepsLabel: HTMLElement;
  private readonly seedInput: HTMLInputElement;
  private readonly generateBtn: HTMLButtonElement;
  private readonly galleryEl: HTMLElement;
  private readonly errorEl: HTMLElement;
  private readonly canvas: HTMLCanvasElement;
  private brushValue: 0 | 1 = 1;
  private drawing = false;

  constructor(private readonly ctl: StudioController, doc: Document = document) {
    this.root = doc.createElement("section");
    this.root.className = "studio-panel";

    this.canvas = doc.createElement("canvas");
    this.canvas.className = "mask-canvas";
    this.canvas.addEventListener("pointerdown", (e) => {
      this.drawing = true;
      this.paintAt(e);
    });
    this.canvas.addEventListener("pointermove", (e) => {
      if (this.drawing) this.paintAt(e);
    });
    this.canvas.addEventListener("pointerup", () => (this.drawing = false));
    this.canvas.addEventListener("pointerleave", () => (this.drawing = false));

    const tools = doc.createElement("div");
    tools.className = "mask-tools";
    const mkBtn = (label: string, fn: () => void) => {
      const b = doc.createElement("button");
      b.textContent = label;
      b.addEventListener("click", () => {
        fn();
        this.render();
      });
      tools.append(b);
      return b;
    };
    mkBtn("Brush", () => (this.brushValue = 1));
    mkBtn("Erase", () => (this.brushValue = 0));
    mkBtn("Rectangle", () => this.ctl.mask.stampRectangle());
    mkBtn("L-shape", () => this.ctl.mask.stampLShape());
    mkBtn("Ellipse", () => this.ctl.mask.stampEllipse());
    mkBtn("Clear", () => this.ctl.mask.clear());

    this.promptInput = doc.createElement("input");
    this.promptInput.type = "text";
    this.promptInput.placeholder = "design brief, e.g. a floorplan for a library";
    this.promptInput.addEventListener("input", () => {
      this.ctl.prompt = this.promptInput.value;
      this.render();
    });

    this.stepsSlider = doc.createElement("input");
    this.stepsSlider.type = "range";
    this.stepsSlider.min = "1";
    this.stepsSlider.max = String(this.ctl.maxSteps);
    this.stepsSlider.value = String(this.ctl.steps);
    this.stepsLabel = doc.createElement("span");
    this.stepsSlider.addEventListener("input", () => {
      this.ctl.steps = Number(this.stepsSlider.value);
      this.render();
    });

    this.seedInput = doc.createElement("input");
    this.seedInput.type = "number";
    this.seedInput.placeholder = "seed (blank = random)";
    this.seedInput.addEventListener("input", () => {
      this.ctl.seed = this.seedInput.value === "" ? null : Number(this.seedInput.value);
    });

    this.generateBtn = doc.createElement("button");
    this.generateBtn.className = "generate";
    this.generateBtn.textContent = "Generate";
    this.generateBtn.addEventListener("click", () => void this.onGenerate());

    this.errorEl = doc.createElement("div");
    this.errorEl.className = "error hidden";

    this.galleryEl = doc.createElement("div");
    this.galleryEl.className = "gallery";

    const controls = doc.createElement("div");
    controls.className = "studio-controls";
    controls.append(this.promptInput, this.stepsSlider, this.stepsLabel,
                    this.seedInput, this.generateBtn);
    this.root.append(tools, this.canvas, controls, this.errorEl, this.galleryEl);
    this.render();
  }

  private paintAt(e: PointerEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    const col = ((e.clientX - rect.left) / Math.max(rect.width, 1)) * this.ctl.maskSize;
    const row = ((e.clientY - rect.top) / Math.max(rect.height, 1)) * this.ctl.maskSize;
    this.ctl.mask.paint(row, col, this.ctl.maskSize / 16, this.brushValue);
    this.render();
  }

  private async onGenerate(): Promise<void> {
    this.render();
    try {
      await this.ctl.generate();
      this.errorEl.classList.add("hidden");
    } catch {
      this.errorEl.textContent = this.ctl.error ?? "generation failed";
      this.errorEl.classList.remove("hidden");
    }
    this.render();
  }

  render(): void {
    this.promptInput.value = this.ctl.prompt;
    this.stepsSlider.value = String(this.ctl.steps);
    this.stepsLabel.textContent = `${this.ctl.steps} steps`;
    this.seedInput.value = this.ctl.seed === null ? "" : String(this.ctl.seed);
    this.generateBtn.disabled = !this.ctl.canGenerate();
    drawMask(this.ctl.mask, this.canvas);
    this.renderGallery();
  }

  private renderGallery(): void {
    this.galleryEl.textContent = "";
    const doc = this.galleryEl.ownerDocument;
    for (const entry of this.ctl.gallery) {
      const tile = doc.createElement("figure");
      tile.className = "tile";
      const inputs = doc.createElement("figcaption");
      inputs.textContent =
        `"${entry.request.prompt}" · ${entry.request.steps} steps · ` +
        `seed ${entry.resolvedSeed ?? "?"} · ${entry.warnings.join("; ")}`;
      const maskView = doc.createElement("canvas");
      maskView.className = "tile-mask";
      drawMask(entry.mask, maskView);
      tile.append(inputs, maskView);
      for (const b64 of entry.images) {
        const img = doc.createElement("img");
        img.src = `data:image/png;base64,${b64}`;
        img.alt = "generated floorplan";
        tile.append(img);
      }
      const iterate = doc.createElement("button");
      iterate.textContent = "Iterate from this";
      iterate.addEventListener("click", () => {
        this.ctl.iterateFrom(entry);
        this.render();
      });
      tile.append(iterate);
      this.galleryEl.append(tile);
    }
  }
}
