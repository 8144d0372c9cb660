import { ApiClient } from "./api";
import { RatingFlow, RatingPanel } from "./rating";
import { LocalDraftStore } from "./storage";
import { StudioController, StudioPanel } from "./studio";

function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  return fromQuery ?? "http://127.0.0.1:8000";
}

async function boot(): Promise<void> {
  const api = new ApiClient(apiBase());
  const app = document.getElementById("app");
  if (!app) return;

  const tabs = document.createElement("nav");
  const ratingBtn = document.createElement("button");
  ratingBtn.textContent = "Rating game";
  const studioBtn = document.createElement("button");
  studioBtn.textContent = "Studio";
  tabs.append(ratingBtn, studioBtn);
  const stage = document.createElement("main");
  app.append(tabs, stage);

  let maskSize = 64;
  let maxSteps = 50;
  let checkpointLoaded = false;
  try {
    const health = await api.health();
    checkpointLoaded = health.checkpoint_loaded;
    if (health.image_size) maskSize = health.image_size;
    if (health.max_steps) maxSteps = health.max_steps;
  } catch {
    // service down; panels will surface errors on use
  }

  const showRating = async () => {
    stage.textContent = "";
    const player = window.prompt("Player id (free text):", "architect") ?? "anonymous";
    const panel = new RatingPanel(new RatingFlow(api, new LocalDraftStore(), player));
    stage.append(panel.root);
    try {
      await panel.start();
    } catch (err) {
      const msg = document.createElement("p");
      msg.className = "error";
      msg.textContent = `could not start a session: ${err}`;
      stage.append(msg);
    }
  };

  const showStudio = () => {
    stage.textContent = "";
    if (!checkpointLoaded) {
      const warn = document.createElement("p");
      warn.className = "error";
      warn.textContent = "No checkpoint loaded server-side; generation will fail.";
      stage.append(warn);
    }
    const panel = new StudioPanel(new StudioController(api, maskSize, maxSteps));
    stage.append(panel.root);
  };

  ratingBtn.addEventListener("click", () => void showRating());
  studioBtn.addEventListener("click", showStudio);
  showStudio();
}

void boot();
