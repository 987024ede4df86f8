import { PoseClient } from "./api";
import { debounce } from "./debounce";
import { PreviewLoop, blinkSweep } from "./preview";
import { ViewerState } from "./state";
import { Pose } from "./types";

const SERVER = (window as { EYELIDLAB_SERVER?: string }).EYELIDLAB_SERVER ?? "http://127.0.0.1:8080";
const PREVIEW_SIZE = 128;
const DEBOUNCE_MS = 150;

const state = new ViewerState();
const client = new PoseClient(SERVER);

const el = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const sliders: Record<string, HTMLInputElement> = {};
const sliderDefs: Array<{ id: keyof Pose; label: string }> = [
  { id: "pitch_left", label: "Left pitch" },
  { id: "yaw_left", label: "Left yaw" },
  { id: "pitch_right", label: "Right pitch" },
  { id: "yaw_right", label: "Right yaw" },
  { id: "closing", label: "Closing" },
];

function buildControls(): void {
  const panel = el<HTMLDivElement>("controls");
  for (const def of sliderDefs) {
    const row = document.createElement("label");
    row.className = "slider-row";
    const span = document.createElement("span");
    span.textContent = def.label;
    const input = document.createElement("input");
    input.type = "range";
    input.id = def.id;
    input.disabled = true;
    input.step = "0.5";
    const value = document.createElement("output");
    value.textContent = "0";
    input.addEventListener("input", () => {
      const pose = state.update({ [def.id]: Number(input.value) } as Partial<Pose>);
      value.textContent = String(pose[def.id]);
      schedulePreview();
    });
    row.append(span, input, value);
    panel.append(row);
    sliders[def.id] = input;
  }
}

const preview = new PreviewLoop(
  client,
  PREVIEW_SIZE,
  (result) => {
    el<HTMLImageElement>("preview").src = result.imageUrl;
    state.lastLatencyMs = result.latencyMs;
    el<HTMLSpanElement>("latency").textContent = `${result.latencyMs} ms`;
    el<HTMLSpanElement>("clamped").textContent = result.clamped ? "clamped to range" : "";
  },
  (err) => {
    el<HTMLSpanElement>("status").textContent = `render failed: ${String(err)}`;
  },
);

const schedulePreview = debounce(() => preview.request(state.pose), DEBOUNCE_MS);

async function syncBounds(): Promise<void> {
  const status = el<HTMLSpanElement>("status");
  try {
    const info = await client.info();
    state.setRanges(info.gaze_ranges);
    for (const def of sliderDefs) {
      const input = sliders[def.id];
      const [lo, hi] = def.id === "closing" ? [0, 1] : def.id.startsWith("pitch") ? info.gaze_ranges.pitch : info.gaze_ranges.yaw;
      input.min = String(lo);
      input.max = String(hi);
      input.step = def.id === "closing" ? "0.05" : "0.5";
      input.value = "0";
      input.disabled = false;
    }
    status.textContent = `connected (${info.checkpoint_id})`;
    preview.request(state.pose);
  } catch {
    status.textContent = "server unavailable, retrying…";
    setTimeout(syncBounds, 1500);
  }
}

function wireButtons(): void {
  el<HTMLButtonElement>("blink").addEventListener("click", async () => {
    for (const pose of blinkSweep(state.pose, 12)) {
      await new Promise<void>((resolve) => {
        const poll = () => (preview.idle ? resolve() : setTimeout(poll, 20));
        preview.request(pose);
        poll();
      });
    }
    preview.request(state.pose);
  });
  el<HTMLButtonElement>("bookmark").addEventListener("click", () => {
    const name = `pose ${state.bookmarks.length + 1}`;
    state.addBookmark(name);
    const item = document.createElement("li");
    item.textContent = `${name} (closing ${state.pose.closing.toFixed(2)})`;
    el<HTMLUListElement>("bookmarks").append(item);
  });
  el<HTMLButtonElement>("export").addEventListener("click", () => {
    const doc = JSON.stringify(state.exportSchedule(), null, 1);
    const blob = new Blob([doc], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "schedule.json";
    a.click();
  });
}

buildControls();
wireButtons();
void syncBounds();
