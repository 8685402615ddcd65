/** Browser entry point: wires the store, canvas viewer, and tools to the DOM.
 *
 * Configuration comes from the query string:
 *   index.html?backend=http://127.0.0.1:9100&token=dev-token&job=<job_id>
 */

import { ApiClient } from "./api.js";
import type { Point } from "./geometry.js";
import { ReviewStore } from "./store.js";
import {
  deleteTool,
  flipTool,
  mergeTool,
  reclassifyTool,
  redrawTool,
  rotateTool,
  splitTool,
  type ToolResult,
} from "./tools.js";
import { CLASS_LABELS, type ToolName } from "./types.js";
import { drawOverlays, fitTransform, hitTest, screenToImage } from "./viewer.js";

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function startApp(): void {
  const params = new URLSearchParams(window.location.search);
  const backend = params.get("backend") ?? "http://127.0.0.1:9100";
  const token = params.get("token") ?? "dev-token";
  const jobId = params.get("job");

  const api = new ApiClient(backend, token);
  const store = new ReviewStore(api, params.get("actor") ?? "reviewer");

  const canvas = element<HTMLCanvasElement>("viewer");
  const ctx = canvas.getContext("2d")!;
  const banner = element<HTMLDivElement>("conflict-banner");
  const badges = element<HTMLDivElement>("badges");
  const iscnBox = element<HTMLDivElement>("iscn");
  const karyogramImg = element<HTMLImageElement>("karyogram");
  const versionSlider = element<HTMLInputElement>("version");
  const versionLabel = element<HTMLSpanElement>("version-label");
  const statusLine = element<HTMLDivElement>("status");
  const classPicker = element<HTMLSelectElement>("class-picker");
  const degreesInput = element<HTMLInputElement>("degrees");

  for (const label of [...CLASS_LABELS, "Unknown"]) {
    const option = document.createElement("option");
    option.value = label;
    option.textContent = label;
    classPicker.appendChild(option);
  }

  let image: HTMLImageElement | null = null;
  let drawing: Point[] = [];

  const transform = () => {
    const w = image?.naturalWidth ?? 1;
    const h = image?.naturalHeight ?? 1;
    return fitTransform(w, h, canvas.width, canvas.height);
  };

  function render(): void {
    const state = store.getState();
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (state.notFound) {
      ctx.fillStyle = "#444";
      ctx.font = "16px sans-serif";
      ctx.fillText("not found (missing id or foreign tenant)", 20, 40);
      banner.style.display = "none";
      return;
    }
    const t = transform();
    if (image) {
      ctx.drawImage(image, t.offsetX, t.offsetY,
                    image.naturalWidth * t.scale, image.naturalHeight * t.scale);
    }
    if (state.set) {
      drawOverlays(ctx, t, state.set.annotations, state.selected, state.overlays);
    }
    if (drawing.length > 1) {
      ctx.beginPath();
      drawing.forEach(([x, y], i) => {
        const sx = x * t.scale + t.offsetX;
        const sy = y * t.scale + t.offsetY;
        if (i === 0) ctx.moveTo(sx, sy);
        else ctx.lineTo(sx, sy);
      });
      ctx.strokeStyle = "#ff0000";
      ctx.lineWidth = 2;
      ctx.stroke();
    }

    banner.style.display = state.conflict ? "block" : "none";
    banner.textContent = state.conflict?.message ?? "";
    badges.textContent = store.degradedStages().length
      ? `degraded: ${store.degradedStages().join(", ")}`
      : "";
    iscnBox.textContent = state.iscn
      ? `${state.iscn.text}${state.iscn.uncertain ? "  (uncertain)" : ""}`
      : "";
    const latest = state.set?.latest_version ?? 0;
    versionSlider.max = String(latest);
    versionSlider.value = String(state.version);
    versionLabel.textContent = `v${state.version} / v${latest}`;
    statusLine.textContent =
      `${state.job?.state ?? ""}${state.signedOff ? "  [signed off]" : ""}` +
      `${store.toolsDisabled() ? "  tools disabled" : ""}`;
    for (const button of document.querySelectorAll<HTMLButtonElement>("button[data-tool]")) {
      button.disabled = store.toolsDisabled();
      button.classList.toggle("active", button.dataset.tool === state.activeTool);
    }
  }

  async function refreshKaryogram(): Promise<void> {
    const state = store.getState();
    if (!state.imageId) return;
    const { png } = await api.getKaryogram(state.imageId, state.version);
    karyogramImg.src = URL.createObjectURL(png);
  }

  store.subscribe(() => {
    render();
  });

  async function applyResult(result: ToolResult): Promise<void> {
    if ("error" in result) {
      statusLine.textContent = result.error;
      return;
    }
    const ok = await store.applyEdit(result.edit);
    if (ok) await refreshKaryogram();
  }

  // tool buttons: immediate tools act on the current selection, drawing
  // tools arm the canvas
  for (const button of document.querySelectorAll<HTMLButtonElement>("button[data-tool]")) {
    button.addEventListener("click", async () => {
      const tool = button.dataset.tool as ToolName;
      const selection = store.getState().selected;
      if (tool === "delete") return applyResult(deleteTool(selection));
      if (tool === "flip") return applyResult(flipTool(selection));
      if (tool === "merge") {
        return applyResult(mergeTool(selection, classPicker.value || undefined));
      }
      if (tool === "reclassify") {
        return applyResult(reclassifyTool(selection, classPicker.value));
      }
      if (tool === "rotate") {
        return applyResult(rotateTool(selection, parseFloat(degreesInput.value)));
      }
      // split / redraw arm a drawing gesture
      store.setTool(tool);
      drawing = [];
    });
  }

  element<HTMLButtonElement>("signoff").addEventListener("click", async () => {
    await store.signOff();
  });
  element<HTMLButtonElement>("reload").addEventListener("click", async () => {
    await store.reloadAfterConflict();
    await refreshKaryogram();
  });
  versionSlider.addEventListener("change", async () => {
    await store.showVersion(parseInt(versionSlider.value, 10));
    await refreshKaryogram();
  });
  for (const key of ["masks", "boxes", "labels"] as const) {
    element<HTMLInputElement>(`toggle-${key}`).addEventListener("change", () => {
      store.toggleOverlay(key);
    });
  }

  let pointerDown = false;
  canvas.addEventListener("pointerdown", (event) => {
    const state = store.getState();
    const point = screenToImage(transform(), event.offsetX, event.offsetY);
    if (state.activeTool === "split" || state.activeTool === "redraw") {
      pointerDown = true;
      drawing = [point];
      return;
    }
    const hit = state.set ? hitTest(state.set.annotations, point) : null;
    if (hit === null) {
      store.select([]);
    } else if (event.shiftKey) {
      const selected = state.selected.includes(hit)
        ? state.selected.filter((id) => id !== hit)
        : [...state.selected, hit];
      store.select(selected);
    } else {
      store.select([hit]);
    }
  });
  canvas.addEventListener("pointermove", (event) => {
    if (!pointerDown) return;
    drawing.push(screenToImage(transform(), event.offsetX, event.offsetY));
    render();
  });
  canvas.addEventListener("pointerup", async () => {
    if (!pointerDown) return;
    pointerDown = false;
    const state = store.getState();
    const tool = state.activeTool;
    const gesture = drawing;
    drawing = [];
    store.setTool(null);
    if (tool === "split") {
      const annotation = state.selected.length === 1
        ? store.annotationById(state.selected[0]) : undefined;
      await applyResult(splitTool(state.selected, annotation, gesture));
    } else if (tool === "redraw") {
      await applyResult(redrawTool(state.selected, gesture));
    }
  });

  (async () => {
    if (!jobId) {
      statusLine.textContent = "pass ?job=<job_id> in the URL";
      return;
    }
    await store.loadJob(jobId);
    const state = store.getState();
    if (state.imageId) {
      const blob = await api.getRasterPng(state.imageId);
      image = new Image();
      image.onload = () => render();
      image.src = URL.createObjectURL(blob);
      await refreshKaryogram();
    }
    render();
  })();
}

startApp();
