/** Client-side mirror of server session state.
 *
 * Every StateView overwrites the mirrored rail and cards wholesale, so the
 * rail can never drift from the server's filter set. Direct deltas may be
 * applied optimistically; the next StateView either confirms them (they are
 * dropped from the pending queue) or implicitly rolls them back because the
 * authoritative payload replaces local guesses.
 */

import {
  CardState,
  FilterSpec,
  Message,
  OverloadReport,
  RailTag,
  StateViewPayload,
  filterKey,
} from "./protocol.js";

export type Tier = "Silent" | "Inferred" | "NeedsConfirmation";

export interface TierStyle {
  border: "plain" | "highlighted";
  requiresModal: boolean;
}

/** Confidence styling is a pure function of the tier, nothing else. */
export function tierOf(confidence: number, silent = 0.9, inferred = 0.6): Tier {
  if (confidence >= silent) return "Silent";
  if (confidence >= inferred) return "Inferred";
  return "NeedsConfirmation";
}

export function styleFor(tier: Tier): TierStyle {
  switch (tier) {
    case "Silent":
      return { border: "plain", requiresModal: false };
    case "Inferred":
      return { border: "highlighted", requiresModal: false };
    case "NeedsConfirmation":
      return { border: "plain", requiresModal: true };
  }
}

export interface Viewport {
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface PendingDelta {
  action: string;
  payload: Record<string, unknown>;
  sentAt: number;
}

export type OverloadIndicator = "ok" | "externalize" | "errorProne";

export class UiViewModel {
  sessionId: string;
  stateHash = "";
  railTags: RailTag[] = [];
  cards: CardState[] = [];
  overload: OverloadReport | null = null;
  recommendation: string = "ChatTolerable";
  forgottenFilters: FilterSpec[] = [];
  connected = true;

  // Local-only state.
  viewport: Viewport = { x: 0, y: 0, width: 100, height: 100 };
  selection = new Set<number>();
  pendingDeltas: PendingDelta[] = [];

  constructor(sessionId: string) {
    this.sessionId = sessionId;
  }

  applyStateView(msg: Message<StateViewPayload>): void {
    if (msg.session_id !== this.sessionId) return;
    const p = msg.payload;
    this.stateHash = p.state_hash;
    this.railTags = p.rail_tags;
    this.cards = p.cards;
    this.overload = p.overload;
    this.recommendation = p.recommendation;
    this.forgottenFilters = p.forgotten_filters;
    this.reconcilePending();
  }

  /** Drop pending deltas the server has confirmed; anything else was either
   * rejected or superseded and the authoritative view already replaced it. */
  private reconcilePending(): void {
    this.pendingDeltas = this.pendingDeltas.filter((d) => !this.isReflected(d));
  }

  private isReflected(d: PendingDelta): boolean {
    if (d.action === "MoveCard") {
      const id = d.payload["id"] as string;
      const pos = d.payload["position"] as [number, number];
      const card = this.cards.find((c) => c.id === id);
      return card !== undefined && card.position[0] === pos[0] && card.position[1] === pos[1];
    }
    if (d.action === "RemoveFilter") {
      const column = d.payload["column"] as string | undefined;
      if (column !== undefined) {
        return !this.filterSet().some((f) => f.column === column);
      }
      const spec = d.payload["filter"] as FilterSpec | undefined;
      if (spec !== undefined) {
        const key = filterKey(spec);
        return !this.filterSet().some((f) => filterKey(f) === key);
      }
    }
    if (d.action === "SetZoom") {
      const card = this.cards.find((c) => c.id === d.payload["id"]);
      return card !== undefined && card.zoom_level === d.payload["level"];
    }
    // Unknown action: treat the fresh StateView as authoritative.
    return true;
  }

  /** The server-mirrored filter set, read off the rail tags. */
  filterSet(): FilterSpec[] {
    return this.railTags
      .filter((t) => t.kind === "filter" && t.filter !== undefined)
      .map((t) => t.filter as FilterSpec);
  }

  filterKeys(): Set<string> {
    return new Set(this.filterSet().map(filterKey));
  }

  tagTier(tag: RailTag): Tier {
    return tierOf(tag.confidence);
  }

  overloadIndicator(): OverloadIndicator {
    switch (this.recommendation) {
      case "ErrorProne":
        return "errorProne";
      case "ExternalizeState":
        return "externalize";
      default:
        return "ok";
    }
  }

  /** Disconnection leaves the rail readable but nothing removable. */
  setConnected(connected: boolean): void {
    this.connected = connected;
  }

  canRemove(tag: RailTag): boolean {
    return this.connected && tag.removable;
  }
}
