/** Semantic zoom gesture: the wheel changes a card's abstraction level, not
 * the viewport. Wheel up moves toward the level-0 summary sentence, wheel
 * down toward level-2 raw rows; levels clamp at the ends. */

import { DeltaPayload, directDelta } from "./protocol.js";

export type ZoomLevel = 0 | 1 | 2;
export type WheelDirection = "up" | "down";

export function nextLevel(level: ZoomLevel, direction: WheelDirection): ZoomLevel {
  const raw = direction === "up" ? level - 1 : level + 1;
  return Math.min(2, Math.max(0, raw)) as ZoomLevel;
}

/** Null when the gesture hits a clamp (no Delta should be sent). */
export function zoomGesture(
  cardId: string,
  level: ZoomLevel,
  direction: WheelDirection,
): DeltaPayload | null {
  const target = nextLevel(level, direction);
  if (target === level) return null;
  return directDelta("SetZoom", { id: cardId, level: target });
}
