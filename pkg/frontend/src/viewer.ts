/** Canvas rendering of the metaphase image with annotation overlays.
 *
 * Pure draw calls over the store state; zoom/pan is a single affine scale
 * plus offset so screen/image coordinate mapping stays exact.
 */

import { polygonBounds } from "./geometry.js";
import type { OverlayToggles } from "./store.js";
import type { Annotation } from "./types.js";

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export function imageToScreen(t: ViewTransform, x: number, y: number): [number, number] {
  return [x * t.scale + t.offsetX, y * t.scale + t.offsetY];
}

export function screenToImage(t: ViewTransform, x: number, y: number): [number, number] {
  return [(x - t.offsetX) / t.scale, (y - t.offsetY) / t.scale];
}

/** Fit the whole image into the viewport, centered. */
export function fitTransform(imageW: number, imageH: number,
                             viewW: number, viewH: number): ViewTransform {
  const scale = Math.min(viewW / imageW, viewH / imageH);
  return {
    scale,
    offsetX: (viewW - imageW * scale) / 2,
    offsetY: (viewH - imageH * scale) / 2,
  };
}

const CLASS_COLORS = ["#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                      "#46f0f0", "#f032e6", "#bcf60c", "#008080", "#9a6324"];

export function colorFor(annotation: Annotation): string {
  if (annotation.class === "Unknown") return "#808080";
  const index = annotation.class === "X" ? 22 :
    annotation.class === "Y" ? 23 : parseInt(annotation.class, 10) - 1;
  return CLASS_COLORS[index % CLASS_COLORS.length];
}

export function drawOverlays(ctx: CanvasRenderingContext2D, t: ViewTransform,
                             annotations: Annotation[], selected: number[],
                             overlays: OverlayToggles): void {
  for (const annotation of annotations) {
    const color = colorFor(annotation);
    const isSelected = selected.includes(annotation.id);
    if (overlays.masks) {
      ctx.beginPath();
      annotation.polygon.forEach(([x, y], i) => {
        const [sx, sy] = imageToScreen(t, x, y);
        if (i === 0) ctx.moveTo(sx, sy);
        else ctx.lineTo(sx, sy);
      });
      ctx.closePath();
      ctx.strokeStyle = color;
      ctx.lineWidth = isSelected ? 3 : 1.5;
      ctx.stroke();
      ctx.globalAlpha = isSelected ? 0.35 : 0.15;
      ctx.fillStyle = color;
      ctx.fill();
      ctx.globalAlpha = 1;
    }
    const bounds = polygonBounds(annotation.polygon);
    if (overlays.boxes) {
      const [x0, y0] = imageToScreen(t, bounds.x0, bounds.y0);
      const [x1, y1] = imageToScreen(t, bounds.x1, bounds.y1);
      ctx.strokeStyle = color;
      ctx.lineWidth = 1;
      ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
    }
    if (overlays.labels) {
      const [lx, ly] = imageToScreen(t, bounds.x0, bounds.y0);
      ctx.fillStyle = color;
      ctx.font = "12px sans-serif";
      ctx.fillText(annotation.class, lx, ly - 3);
    }
  }
}

/** Topmost annotation whose polygon contains the image point, if any. */
export function hitTest(annotations: Annotation[], point: [number, number]): number | null {
  for (let i = annotations.length - 1; i >= 0; i--) {
    const bounds = polygonBounds(annotations[i].polygon);
    const [x, y] = point;
    if (x < bounds.x0 || x > bounds.x1 || y < bounds.y0 || y > bounds.y1) continue;
    if (pointInside(annotations[i].polygon, point)) return annotations[i].id;
  }
  return null;
}

function pointInside(polygon: [number, number][], [px, py]: [number, number]): boolean {
  let inside = false;
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const [xi, yi] = polygon[i];
    const [xj, yj] = polygon[j];
    if (yi > py !== yj > py && px < ((xj - xi) * (py - yi)) / (yj - yi) + xi) {
      inside = !inside;
    }
  }
  return inside;
}
