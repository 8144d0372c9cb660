/** Binary footprint mask model.
 *
 * The grid (0/1 per pixel) is the source of truth; the canvas only displays
 * it. Exports are binarized by construction, so the uploaded PNG can never
 * carry gray values.
 */

export const BINARY_THRESHOLD = 0.5;

export function binarize(value: number): 0 | 1 {
  return value >= BINARY_THRESHOLD ? 1 : 0;
}

export class MaskGrid {
  readonly data: Uint8Array;

  constructor(readonly size: number, data?: Uint8Array) {
    if (data && data.length !== size * size) {
      throw new Error(`grid data length ${data.length} != ${size * size}`);
    }
    this.data = data ? Uint8Array.from(data) : new Uint8Array(size * size);
  }

  at(row: number, col: number): number {
    return this.data[row * this.size + col];
  }

  set(row: number, col: number, value: number): void {
    if (row < 0 || col < 0 || row >= this.size || col >= this.size) return;
    this.data[row * this.size + col] = binarize(value);
  }

  clear(): void {
    this.data.fill(0);
  }

  isEmpty(): boolean {
    return !this.data.some((v) => v === 1);
  }

  foregroundCount(): number {
    let n = 0;
    for (const v of this.data) n += v;
    return n;
  }

  clone(): MaskGrid {
    return new MaskGrid(this.size, this.data);
  }

  /** Circular brush; value 1 paints, 0 erases. */
  paint(row: number, col: number, radius: number, value: 0 | 1): void {
    const r2 = radius * radius;
    const lo = Math.floor(-radius);
    const hi = Math.ceil(radius);
    for (let dr = lo; dr <= hi; dr++) {
      for (let dc = lo; dc <= hi; dc++) {
        if (dr * dr + dc * dc <= r2) {
          this.set(Math.round(row + dr), Math.round(col + dc), value);
        }
      }
    }
  }

  stampRectangle(extent = 0.6): void {
    const half = (extent * this.size) / 2;
    const c = (this.size - 1) / 2;
    this.fillWhere((r, cIdx) => Math.abs(r - c) <= half && Math.abs(cIdx - c) <= half);
  }

  stampEllipse(a = 0.42, b = 0.34): void {
    const c = (this.size - 1) / 2;
    const ra = a * this.size;
    const rb = b * this.size;
    this.fillWhere((r, cIdx) => ((r - c) / ra) ** 2 + ((cIdx - c) / rb) ** 2 <= 1);
  }

  stampLShape(extent = 0.72, cut = 0.45): void {
    const half = (extent * this.size) / 2;
    const c = (this.size - 1) / 2;
    const cutEdge = c - half + cut * 2 * half;
    this.fillWhere(
      (r, cIdx) =>
        Math.abs(r - c) <= half &&
        Math.abs(cIdx - c) <= half &&
        !(r < cutEdge && cIdx < cutEdge),
    );
  }

  private fillWhere(pred: (row: number, col: number) => boolean): void {
    for (let r = 0; r < this.size; r++) {
      for (let cIdx = 0; cIdx < this.size; cIdx++) {
        if (pred(r, cIdx)) this.data[r * this.size + cIdx] = 1;
      }
    }
  }

  /** RGBA pixels, strictly 0 or 255 per channel. */
  toRgba(): Uint8ClampedArray<ArrayBuffer> {
    const out = new Uint8ClampedArray(new ArrayBuffer(this.size * this.size * 4));
    for (let i = 0; i < this.data.length; i++) {
      const v = this.data[i] ? 255 : 0;
      out[i * 4] = v;
      out[i * 4 + 1] = v;
      out[i * 4 + 2] = v;
      out[i * 4 + 3] = 255;
    }
    return out;
  }
}

/** Render the grid to a canvas (one cell per pixel; CSS scales it up). */
export function drawMask(grid: MaskGrid, canvas: HTMLCanvasElement): void {
  canvas.width = grid.size;
  canvas.height = grid.size;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const image = new ImageData(grid.toRgba(), grid.size, grid.size);
  ctx.putImageData(image, 0, 0);
}

/** Export the grid as a PNG blob via an offscreen canvas. */
export async function maskToPng(grid: MaskGrid): Promise<Blob> {
  const canvas = document.createElement("canvas");
  canvas.width = grid.size;
  canvas.height = grid.size;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");
  ctx.putImageData(new ImageData(grid.toRgba(), grid.size, grid.size), 0, 0);
  return new Promise((resolve, reject) => {
    canvas.toBlob((blob) => (blob ? resolve(blob) : reject(new Error("toBlob failed"))), "image/png");
  });
}
