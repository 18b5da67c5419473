/** Canvas interactions: card drag, arrow-link creation, lasso selection.
 *
 * Interactions never mutate state locally; each gesture resolves to a Delta
 * payload for the gateway (or, for the lasso, a local selection id set that
 * accompanies the next deictic utterance).
 */

import { DeltaPayload, directDelta } from "./protocol.js";

export interface Point {
  x: number;
  y: number;
}

export interface PlottedPoint extends Point {
  id: number;
}

export interface DragGesture {
  cardId: string;
  from: Point;
  to: Point;
}

export function dragToDelta(g: DragGesture): DeltaPayload | null {
  if (g.from.x === g.to.x && g.from.y === g.to.y) return null;
  return directDelta("MoveCard", { id: g.cardId, position: [g.to.x, g.to.y] });
}

export interface ArrowGesture {
  sourceCardId: string;
  targetCardId: string;
}

export function arrowToDelta(g: ArrowGesture): DeltaPayload | null {
  if (g.sourceCardId === g.targetCardId) return null;
  return directDelta("LinkCards", { source: g.sourceCardId, target: g.targetCardId });
}

/** Ray-casting point-in-polygon. Polygon is implicitly closed. */
export function pointInPolygon(p: Point, polygon: Point[]): boolean {
  let inside = false;
  const n = polygon.length;
  for (let i = 0, j = n - 1; i < n; j = i++) {
    const a = polygon[i]!;
    const b = polygon[j]!;
    const crosses = a.y > p.y !== b.y > p.y;
    if (crosses && p.x < ((b.x - a.x) * (p.y - a.y)) / (b.y - a.y) + a.x) {
      inside = !inside;
    }
  }
  return inside;
}

export interface LassoResult {
  ids: Set<number>;
  empty: boolean;
}

/** Exact id set of points enclosed by the lasso path. */
export function lassoSelect(points: PlottedPoint[], path: Point[]): LassoResult {
  const ids = new Set<number>();
  if (path.length >= 3) {
    for (const pt of points) {
      if (pointInPolygon(pt, path)) ids.add(pt.id);
    }
  }
  return { ids, empty: ids.size === 0 };
}
