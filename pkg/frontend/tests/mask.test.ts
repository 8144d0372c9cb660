import { describe, expect, it } from "vitest";

import { binarize, MaskGrid } from "../src/mask";

describe("binarize", () => {
  it("thresholds at 0.5", () => {
    expect(binarize(0)).toBe(0);
    expect(binarize(0.49)).toBe(0);
    expect(binarize(0.5)).toBe(1);
    expect(binarize(1)).toBe(1);
  });
});

describe("MaskGrid", () => {
  it("starts empty", () => {
    const grid = new MaskGrid(16);
    expect(grid.isEmpty()).toBe(true);
    expect(grid.foregroundCount()).toBe(0);
  });

  it("paints a circular blob and erases it", () => {
    const grid = new MaskGrid(32);
    grid.paint(16, 16, 5, 1);
    expect(grid.isEmpty()).toBe(false);
    expect(grid.at(16, 16)).toBe(1);
    expect(grid.at(0, 0)).toBe(0);
    const painted = grid.foregroundCount();
    expect(painted).toBeGreaterThan(60); // ~pi * 25
    grid.paint(16, 16, 6, 0);
    expect(grid.isEmpty()).toBe(true);
  });

  it("is strictly binary after any sequence of operations", () => {
    const grid = new MaskGrid(24);
    grid.stampEllipse();
    grid.paint(3, 3, 2, 1);
    grid.paint(12, 12, 4, 0);
    grid.stampLShape();
    for (const v of grid.data) {
      expect(v === 0 || v === 1).toBe(true);
    }
    const rgba = grid.toRgba();
    for (let i = 0; i < rgba.length; i += 4) {
      expect(rgba[i] === 0 || rgba[i] === 255).toBe(true);
      expect(rgba[i + 3]).toBe(255);
    }
  });

  it("stamps cover sensible areas", () => {
    const size = 32;
    const rect = new MaskGrid(size);
    rect.stampRectangle();
    const rectFrac = rect.foregroundCount() / (size * size);
    expect(rectFrac).toBeGreaterThan(0.3);
    expect(rectFrac).toBeLessThan(0.55);

    const ell = new MaskGrid(size);
    ell.stampEllipse();
    const ellFrac = ell.foregroundCount() / (size * size);
    expect(ellFrac).toBeGreaterThan(0.25);
    expect(ellFrac).toBeLessThan(0.6);

    const l = new MaskGrid(size);
    l.stampLShape();
    const full = new MaskGrid(size);
    full.stampRectangle(0.72);
    expect(l.foregroundCount()).toBeLessThan(full.foregroundCount());
    expect(l.foregroundCount() / (size * size)).toBeGreaterThan(0.25);
  });

  it("ignores out-of-bounds painting", () => {
    const grid = new MaskGrid(8);
    grid.paint(-10, -10, 3, 1);
    grid.paint(100, 100, 3, 1);
    expect(grid.isEmpty()).toBe(true);
  });

  it("clone is independent", () => {
    const grid = new MaskGrid(8);
    grid.stampRectangle();
    const copy = grid.clone();
    grid.clear();
    expect(copy.isEmpty()).toBe(false);
    expect(grid.isEmpty()).toBe(true);
  });
});
