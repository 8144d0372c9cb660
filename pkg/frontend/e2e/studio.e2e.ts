// @vitest-environment node
/** Studio round trip against the real service: a pinned seed reproduces
 * byte-identical images through the full upload-generate-fetch loop. */

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { MaskGrid } from "../src/mask";
import { StudioController } from "../src/studio";
import { encodeGrayPng } from "./png";
import { pythonAvailable, startService, type RunningService } from "./server";

const available = pythonAvailable();
let service: RunningService;
let api: ApiClient;
let maskSize = 32;
let maxSteps = 8;

describe.skipIf(!available)("studio end to end", () => {
  beforeAll(async () => {
    service = await startService(8642);
    api = new ApiClient(service.baseUrl);
    const health = await api.health();
    expect(health.checkpoint_loaded).toBe(true);
    maskSize = health.image_size ?? 32;
    maxSteps = health.max_steps ?? 8;
  });

  afterAll(() => {
    service?.stop();
  });

  function maskBlob(grid: MaskGrid): Blob {
    const gray = Uint8Array.from(grid.data, (v) => (v ? 255 : 0));
    const png = encodeGrayPng(gray, grid.size);
    return new Blob([png.slice().buffer as ArrayBuffer], { type: "image/png" });
  }

  it("pinned seed reproduces identical images via iterate-from-this", async () => {
    const ctl = new StudioController(api, maskSize, maxSteps);
    ctl.prompt = "a floor plan for a football stadium";
    ctl.steps = Math.min(6, maxSteps);
    ctl.n = 2;
    ctl.seed = null;
    ctl.mask.stampEllipse();

    const first = await ctl.generate(maskBlob(ctl.mask));
    expect(first.images.length).toBe(2);
    expect(first.resolvedSeed).not.toBeNull();

    ctl.iterateFrom(first);
    const second = await ctl.generate(maskBlob(ctl.mask));
    expect(second.request.seed).toBe(first.resolvedSeed);
    expect(second.images).toEqual(first.images); // byte-identical base64 payloads
  });

  it("server rejects a genuinely gray mask with 422", async () => {
    // a gray ramp bypassing MaskGrid (which binarizes by construction)
    const raw = new Uint8Array(maskSize * maskSize);
    for (let i = 0; i < raw.length; i++) raw[i] = 100 + (i % 80);
    const png = encodeGrayPng(raw, maskSize);
    const form = new FormData();
    form.append("prompt", "x");
    form.append("steps", "2");
    form.append("n", "1");
    form.append("mask",
      new Blob([png.slice().buffer as ArrayBuffer], { type: "image/png" }), "mask.png");
    const resp = await fetch(`${service.baseUrl}/generate`, { method: "POST", body: form });
    expect(resp.status).toBe(422);
  });

  it("empty mask upload is rejected", async () => {
    const empty = new MaskGrid(maskSize);
    const ctl = new StudioController(api, maskSize, maxSteps);
    ctl.prompt = "a floorplan for a library";
    ctl.steps = 2;
    // bypass canGenerate to exercise the server-side contract
    const form = new FormData();
    form.append("prompt", ctl.prompt);
    form.append("steps", "2");
    form.append("n", "1");
    form.append("mask", maskBlob(empty), "mask.png");
    const resp = await fetch(`${service.baseUrl}/generate`, { method: "POST", body: form });
    expect(resp.status).toBe(422);
  });
});

describe.skipIf(available)("environment", () => {
  it("skipped: python floorgen package unavailable", () => {
    expect(available).toBe(false);
  });
});
