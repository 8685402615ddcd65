/** The seven edit tools: selection arity checks and edit-payload assembly.
 *
 * Each builder validates its inputs and returns the exact JSON the edits
 * endpoint expects, or a string describing why the gesture is invalid. The
 * split tool converts the freehand cut line into the two polygons the API
 * requires.
 */

import { splitPolygon, toPixelPolygon, type Point } from "./geometry.js";
import type { Annotation, ClassLabel, EditOp } from "./types.js";
import { CLASS_LABELS } from "./types.js";

export type ToolResult = { edit: EditOp } | { error: string };

export function deleteTool(selection: number[]): ToolResult {
  if (selection.length !== 1) return { error: "select exactly one chromosome to delete" };
  return { edit: { op: "delete", id: selection[0] } };
}

export function mergeTool(selection: number[], klass?: ClassLabel): ToolResult {
  if (new Set(selection).size < 2) {
    return { error: "select at least two chromosomes to merge" };
  }
  if (klass !== undefined && !isValidClass(klass)) {
    return { error: `unknown class ${klass}` };
  }
  return { edit: { op: "merge", ids: [...selection], ...(klass ? { class: klass } : {}) } };
}

export function splitTool(selection: number[], annotation: Annotation | undefined,
                          drawnLine: Point[]): ToolResult {
  if (selection.length !== 1 || !annotation) {
    return { error: "select exactly one chromosome to split" };
  }
  if (drawnLine.length < 2) return { error: "draw a cut line across the chromosome" };
  const parts = splitPolygon(annotation.polygon, drawnLine);
  if (!parts) return { error: "the cut line must cross the outline exactly twice" };
  return {
    edit: {
      op: "split",
      id: annotation.id,
      polygon_a: toPixelPolygon(parts.a),
      polygon_b: toPixelPolygon(parts.b),
    },
  };
}

export function redrawTool(selection: number[], polygon: Point[]): ToolResult {
  if (selection.length !== 1) return { error: "select exactly one chromosome to redraw" };
  if (polygon.length < 3) return { error: "outline needs at least three points" };
  return { edit: { op: "redraw", id: selection[0], polygon: toPixelPolygon(polygon) } };
}

export function reclassifyTool(selection: number[], klass: ClassLabel): ToolResult {
  if (selection.length !== 1) return { error: "select exactly one chromosome to reclassify" };
  if (!isValidClass(klass)) return { error: `unknown class ${klass}` };
  return { edit: { op: "reclassify", id: selection[0], class: klass } };
}

export function rotateTool(selection: number[], degrees: number): ToolResult {
  if (selection.length !== 1) return { error: "select exactly one chromosome to rotate" };
  if (!Number.isFinite(degrees)) return { error: "rotation angle must be a number" };
  return { edit: { op: "rotate", id: selection[0], degrees } };
}

export function flipTool(selection: number[]): ToolResult {
  if (selection.length !== 1) return { error: "select exactly one chromosome to flip" };
  return { edit: { op: "flip", id: selection[0] } };
}

function isValidClass(klass: string): boolean {
  return klass === "Unknown" || CLASS_LABELS.includes(klass);
}
