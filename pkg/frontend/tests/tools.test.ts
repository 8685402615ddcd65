import { describe, expect, it } from "vitest";

import {
  deleteTool,
  flipTool,
  mergeTool,
  reclassifyTool,
  redrawTool,
  rotateTool,
  splitTool,
} from "../src/tools.js";
import { makeAnnotation } from "./fake_backend.js";

describe("tool arity and payloads", () => {
  it("delete needs exactly one selection", () => {
    expect(deleteTool([])).toHaveProperty("error");
    expect(deleteTool([1, 2])).toHaveProperty("error");
    expect(deleteTool([7])).toEqual({ edit: { op: "delete", id: 7 } });
  });

  it("merge needs at least two distinct ids", () => {
    expect(mergeTool([1])).toHaveProperty("error");
    expect(mergeTool([1, 1])).toHaveProperty("error");
    expect(mergeTool([1, 2], "8")).toEqual({
      edit: { op: "merge", ids: [1, 2], class: "8" },
    });
    expect(mergeTool([1, 2])).toEqual({ edit: { op: "merge", ids: [1, 2] } });
    expect(mergeTool([1, 2], "47")).toHaveProperty("error");
  });

  it("split converts the drawn line into two polygons", () => {
    const annotation = makeAnnotation(4, "9");   // 8x10 rectangle at (53, 5)
    const bounds = annotation.polygon;
    const midX = (bounds[0][0] + bounds[1][0]) / 2;
    const result = splitTool([4], annotation, [[midX, 0], [midX, 30]]);
    expect(result).toHaveProperty("edit");
    const edit = (result as { edit: { op: string; polygon_a: unknown[]; polygon_b: unknown[] } }).edit;
    expect(edit.op).toBe("split");
    expect(edit.polygon_a.length).toBeGreaterThanOrEqual(3);
    expect(edit.polygon_b.length).toBeGreaterThanOrEqual(3);
  });

  it("split rejects a line that misses", () => {
    const annotation = makeAnnotation(4, "9");
    expect(splitTool([4], annotation, [[0, 0], [1, 1]])).toHaveProperty("error");
    expect(splitTool([], undefined, [[0, 0], [1, 1]])).toHaveProperty("error");
  });

  it("redraw validates the outline", () => {
    expect(redrawTool([3], [[0, 0], [1, 1]])).toHaveProperty("error");
    expect(redrawTool([3], [[0, 0], [5, 0], [5, 5]])).toEqual({
      edit: { op: "redraw", id: 3, polygon: [[0, 0], [5, 0], [5, 5]] },
    });
  });

  it("reclassify validates the class", () => {
    expect(reclassifyTool([2], "21")).toEqual({
      edit: { op: "reclassify", id: 2, class: "21" },
    });
    expect(reclassifyTool([2], "Unknown")).toEqual({
      edit: { op: "reclassify", id: 2, class: "Unknown" },
    });
    expect(reclassifyTool([2], "23")).toHaveProperty("error");
    expect(reclassifyTool([1, 2], "5")).toHaveProperty("error");
  });

  it("rotate and flip", () => {
    expect(rotateTool([5], 30)).toEqual({ edit: { op: "rotate", id: 5, degrees: 30 } });
    expect(rotateTool([5], Number.NaN)).toHaveProperty("error");
    expect(flipTool([5])).toEqual({ edit: { op: "flip", id: 5 } });
    expect(flipTool([])).toHaveProperty("error");
  });
});
