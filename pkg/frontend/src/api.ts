import type { HealthInfo, JobResult, SessionInfo, StatsResponse, StudioRequest } from "./types";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function detailOf(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    return typeof body.detail === "string" ? body.detail : JSON.stringify(body);
  } catch {
    return resp.statusText || `HTTP ${resp.status}`;
  }
}

/** Thin typed client over the evaluation-service HTTP API. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async expect(resp: Response, status: number): Promise<Response> {
    if (resp.status !== status) {
      throw new ApiError(resp.status, await detailOf(resp));
    }
    return resp;
  }

  async health(): Promise<HealthInfo> {
    const resp = await this.expect(await this.fetchFn(this.url("/health")), 200);
    return resp.json();
  }

  async createSession(playerId: string): Promise<SessionInfo> {
    const resp = await this.fetchFn(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ player_id: playerId }),
    });
    return (await this.expect(resp, 201)).json();
  }

  imageUrl(sessionId: string, k: number): string {
    return this.url(`/sessions/${sessionId}/images/${k}`);
  }

  /** Fetch one session image; returns its opaque id and the raw bytes. */
  async fetchImage(sessionId: string, k: number): Promise<{ imageId: string; data: Blob }> {
    const resp = await this.expect(await this.fetchFn(this.imageUrl(sessionId, k)), 200);
    const imageId = resp.headers.get("X-Image-Id");
    if (!imageId) {
      throw new ApiError(500, "image response missing X-Image-Id header");
    }
    return { imageId, data: await resp.blob() };
  }

  async submitRating(sessionId: string, imageId: string, score: number): Promise<void> {
    const resp = await this.fetchFn(this.url(`/sessions/${sessionId}/ratings`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image_id: imageId, score }),
    });
    await this.expect(resp, 204);
  }

  async stats(): Promise<StatsResponse> {
    const resp = await this.expect(await this.fetchFn(this.url("/stats")), 200);
    return resp.json();
  }

  async generate(req: StudioRequest, maskPng: Blob): Promise<string> {
    const form = new FormData();
    form.append("prompt", req.prompt);
    form.append("steps", String(req.steps));
    form.append("n", String(req.n));
    if (req.seed !== null && req.seed !== undefined) {
      form.append("seed", String(req.seed));
    }
    form.append("mask", maskPng, "mask.png");
    const resp = await this.fetchFn(this.url("/generate"), { method: "POST", body: form });
    const body = await (await this.expect(resp, 200)).json();
    return body.job_id as string;
  }

  async job(jobId: string): Promise<JobResult> {
    const resp = await this.expect(await this.fetchFn(this.url(`/jobs/${jobId}`)), 200);
    return resp.json();
  }
}
