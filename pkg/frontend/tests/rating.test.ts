import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { RatingFlow, RatingPanel } from "../src/rating";
import { MemoryDraftStore } from "../src/storage";
import { FakeService } from "./fake_service";

let service: FakeService;
let api: ApiClient;
let store: MemoryDraftStore;

beforeEach(() => {
  service = new FakeService();
  api = new ApiClient("http://fake", service.fetch);
  store = new MemoryDraftStore();
});

describe("RatingFlow", () => {
  it("runs a full 30-image session", async () => {
    const flow = new RatingFlow(api, store, "architect");
    await flow.start();
    for (let k = 0; k < 30; k++) {
      expect(flow.view().done).toBe(false);
      expect(flow.view().index).toBe(k);
      await flow.submit(k % 11);
    }
    expect(flow.view().done).toBe(true);
    expect(service.ratings.length).toBe(30);
    expect(store.loadRating()).toBeNull(); // draft cleared on completion
  });

  it("rejects out-of-range and non-integer scores locally", async () => {
    const flow = new RatingFlow(api, store, "p");
    await flow.start();
    await expect(flow.submit(11)).rejects.toThrow();
    await expect(flow.submit(-1)).rejects.toThrow();
    await expect(flow.submit(5.5)).rejects.toThrow();
    expect(service.ratings.length).toBe(0);
    expect(flow.view().index).toBe(0);
  });

  it("does not advance when the network fails, then resumes on retry", async () => {
    const flow = new RatingFlow(api, store, "p");
    await flow.start();
    service.failNextRating = true;
    await expect(flow.submit(7)).rejects.toThrow();
    expect(flow.view().index).toBe(0);
    expect(flow.view().error).toBeTruthy();
    await flow.submit(7); // retry succeeds
    expect(flow.view().index).toBe(1);
    expect(flow.view().error).toBeNull();
  });

  it("resumes at the first unrated image after a reload", async () => {
    const flow = new RatingFlow(api, store, "p");
    await flow.start();
    for (let k = 0; k < 12; k++) {
      await flow.submit(5);
    }
    // simulate reload: fresh flow over the same draft store
    const resumed = new RatingFlow(api, store, "p");
    await resumed.start();
    expect(resumed.view().index).toBe(12);
    expect(resumed.view().sessionId).toBe(flow.view().sessionId);
    expect(service.sessions.size).toBe(1); // no new session created
  });

  it("treats an already-rated conflict as advancement", async () => {
    const flow = new RatingFlow(api, store, "p");
    await flow.start();
    const view = flow.view();
    await api.submitRating(view.sessionId, view.imageId!, 3); // rated out of band
    await flow.submit(3);
    expect(flow.view().index).toBe(1);
  });
});

describe("RatingPanel DOM", () => {
  it("shows progress, blocks advancing without submit, never leaks groups", async () => {
    const flow = new RatingFlow(api, store, "p");
    const panel = new RatingPanel(flow);
    document.body.append(panel.root);
    await panel.start();

    expect(panel.root.querySelector(".progress")!.textContent).toContain("1 / 30");
    // the only way forward is the submit button; no skip control exists
    const buttons = Array.from(panel.root.querySelectorAll("button")).map(
      (b) => b.textContent,
    );
    expect(buttons).toContain("Submit score");
    expect(buttons.join(" ")).not.toMatch(/skip|next/i);

    // automated DOM anonymity scan during an active session
    for (let k = 0; k < 5; k++) {
      expect(document.body.innerHTML).not.toMatch(/\b(real|generated)\b/i);
      await flow.submit(6);
      panel.render();
    }
    expect(panel.root.querySelector(".progress")!.textContent).toContain("6 / 30");
    document.body.textContent = "";
  });

  it("shows the thank-you screen without any per-image reveal", async () => {
    const flow = new RatingFlow(api, store, "p");
    const panel = new RatingPanel(flow);
    document.body.append(panel.root);
    await panel.start();
    for (let k = 0; k < 30; k++) {
      await flow.submit(5);
    }
    panel.render();
    const thanks = panel.root.querySelector(".thanks")!;
    expect(thanks.classList.contains("hidden")).toBe(false);
    expect(document.body.innerHTML).not.toMatch(/\b(real|generated)\b/i);
    document.body.textContent = "";
  });
});
