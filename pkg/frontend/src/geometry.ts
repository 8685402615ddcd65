/** Polygon utilities for the viewer and the split tool. */

export type Point = [number, number];

export function polygonArea(polygon: Point[]): number {
  let sum = 0;
  for (let i = 0; i < polygon.length; i++) {
    const [x1, y1] = polygon[i];
    const [x2, y2] = polygon[(i + 1) % polygon.length];
    sum += x1 * y2 - x2 * y1;
  }
  return Math.abs(sum) / 2;
}

export function polygonBounds(polygon: Point[]): { x0: number; y0: number; x1: number; y1: number } {
  const xs = polygon.map((p) => p[0]);
  const ys = polygon.map((p) => p[1]);
  return {
    x0: Math.min(...xs), y0: Math.min(...ys),
    x1: Math.max(...xs), y1: Math.max(...ys),
  };
}

export function pointInPolygon([px, py]: Point, polygon: Point[]): boolean {
  let inside = false;
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const [xi, yi] = polygon[i];
    const [xj, yj] = polygon[j];
    if (yi > py !== yj > py &&
        px < ((xj - xi) * (py - yi)) / (yj - yi) + xi) {
      inside = !inside;
    }
  }
  return inside;
}

interface Crossing {
  edge: number;      // polygon edge index (from vertex edge -> edge+1)
  t: number;         // parameter along the polygon edge
  s: number;         // cumulative parameter along the polyline
  point: Point;
}

function segmentIntersection(a: Point, b: Point, c: Point, d: Point):
    { t: number; u: number; point: Point } | null {
  const rx = b[0] - a[0];
  const ry = b[1] - a[1];
  const sx = d[0] - c[0];
  const sy = d[1] - c[1];
  const denom = rx * sy - ry * sx;
  if (Math.abs(denom) < 1e-12) return null;
  const t = ((c[0] - a[0]) * sy - (c[1] - a[1]) * sx) / denom;
  const u = ((c[0] - a[0]) * ry - (c[1] - a[1]) * rx) / denom;
  if (t < 0 || t > 1 || u < 0 || u > 1) return null;
  return { t, u, point: [a[0] + t * rx, a[1] + t * ry] };
}

/** Split a simple polygon along a drawn polyline.
 *
 * The polyline must cross the boundary exactly twice; the portion between the
 * crossings becomes the shared edge of the two output polygons. Returns null
 * when the drawing does not produce a valid cut, so the tool can reject the
 * gesture instead of sending a bad edit.
 */
export function splitPolygon(polygon: Point[], polyline: Point[]):
    { a: Point[]; b: Point[] } | null {
  if (polygon.length < 3 || polyline.length < 2) return null;

  const crossings: Crossing[] = [];
  let arc = 0;
  for (let k = 0; k < polyline.length - 1; k++) {
    const c = polyline[k];
    const d = polyline[k + 1];
    const span = Math.hypot(d[0] - c[0], d[1] - c[1]);
    for (let e = 0; e < polygon.length; e++) {
      const hit = segmentIntersection(
        polygon[e], polygon[(e + 1) % polygon.length], c, d);
      if (hit) {
        crossings.push({ edge: e, t: hit.t, s: arc + hit.u * span, point: hit.point });
      }
    }
    arc += span;
  }
  if (crossings.length !== 2) return null;
  crossings.sort((p, q) => p.s - q.s);
  const [first, second] = crossings;
  if (first.edge === second.edge && Math.abs(first.t - second.t) < 1e-9) return null;

  // the cutting path between the two crossings, following the drawing:
  // polyline vertices whose arc position lies strictly between the crossings
  const vertexArc: number[] = [0];
  for (let k = 0; k < polyline.length - 1; k++) {
    vertexArc.push(vertexArc[k] + Math.hypot(
      polyline[k + 1][0] - polyline[k][0], polyline[k + 1][1] - polyline[k][1]));
  }
  const interior = polyline.filter(
    (_, k) => vertexArc[k] > first.s && vertexArc[k] < second.s);
  const cut: Point[] = [first.point, ...interior, second.point];

  // boundary vertices from just after `from`'s crossing up to the start
  // vertex of `to`'s edge, walking forward around the polygon
  const walkBoundary = (from: Crossing, to: Crossing): Point[] => {
    if (from.edge === to.edge && to.t > from.t) return [];
    const points: Point[] = [];
    let v = (from.edge + 1) % polygon.length;
    for (let guard = 0; guard <= polygon.length; guard++) {
      points.push(polygon[v]);
      if (v === to.edge) break;
      v = (v + 1) % polygon.length;
    }
    return points;
  };

  // side A: first crossing -> boundary -> second crossing -> cut reversed
  const sideA: Point[] = [first.point,
                          ...walkBoundary(first, second),
                          ...[...cut].reverse()];
  // side B: second crossing -> rest of the boundary -> first crossing -> cut
  const sideB: Point[] = [second.point,
                          ...walkBoundary(second, first),
                          ...cut];

  const dedupe = (pts: Point[]): Point[] => {
    const out: Point[] = [];
    for (const p of pts) {
      const last = out[out.length - 1];
      if (!last || Math.hypot(p[0] - last[0], p[1] - last[1]) > 1e-9) out.push(p);
    }
    while (out.length > 1 &&
           Math.hypot(out[0][0] - out[out.length - 1][0],
                      out[0][1] - out[out.length - 1][1]) < 1e-9) {
      out.pop();
    }
    return out;
  };

  const a = dedupe(sideA);
  const b = dedupe(sideB);
  if (a.length < 3 || b.length < 3) return null;
  return { a, b };
}

/** Round polygon vertices to integer pixel coordinates for the API. */
export function toPixelPolygon(points: Point[]): [number, number][] {
  return points.map(([x, y]) => [Math.round(x), Math.round(y)]);
}
