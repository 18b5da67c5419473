/** Wire protocol v1 types and helpers. The server is the source of truth;
 * the client only ever mutates state by sending Utterance or Delta messages. */

export const PROTOCOL_VERSION = "v1";

export type MessageKind =
  | "Utterance"
  | "Delta"
  | "SelectionQuestion"
  | "StateView"
  | "TelemetryView"
  | "CardView"
  | "Error"
  | "Ack";

export interface Message<P = unknown> {
  version: string;
  kind: MessageKind;
  session_id: string;
  seq: number;
  payload: P;
}

export type FilterOp = "eq" | "neq" | "in" | "range";

export interface FilterSpec {
  column: string;
  op: FilterOp;
  values: unknown[];
  lo: number | string | null;
  hi: number | string | null;
}

export interface RailTag {
  kind: "filter" | "statevar";
  label: string;
  filter?: FilterSpec;
  removable: boolean;
  origin: "chat" | "direct" | "system";
  confidence: number;
}

export interface CardState {
  id: string;
  kind: "chart" | "table" | "summary" | "hypothesis";
  position: [number, number];
  size: [number, number];
  query: Record<string, unknown> | null;
  zoom_level: 0 | 1 | 2;
  parent_links: string[];
  pinned: boolean;
  visible: boolean;
}

export interface OverloadReport {
  m: number;
  v: number;
  l_internal: number;
  o: number;
  dimensionality: number;
  s: number;
  o_prime: number;
  p_error: number;
  p_error_basis: string;
}

export interface StateViewPayload {
  state_hash: string;
  rail_tags: RailTag[];
  cards: CardState[];
  overload: OverloadReport;
  forgotten_filters: FilterSpec[];
  recommendation: "ChatTolerable" | "ExternalizeState" | "ErrorProne";
}

export interface CardViewPayload {
  card_id: string;
  zoom: {
    level: number;
    columns?: string[];
    rows?: unknown[][];
    chart?: Record<string, unknown>;
    sentence?: string;
  };
}

export interface DeltaPayload {
  action: string;
  payload: Record<string, unknown>;
  origin: "direct";
  confidence: 1.0;
  utterance: null;
}

let clientSeq = 0;

export function makeMessage<P>(kind: MessageKind, sessionId: string, payload: P): Message<P> {
  clientSeq += 1;
  return { version: PROTOCOL_VERSION, kind, session_id: sessionId, seq: clientSeq, payload };
}

export function directDelta(action: string, payload: Record<string, unknown>): DeltaPayload {
  return { action, payload, origin: "direct", confidence: 1.0, utterance: null };
}

export function isStateView(msg: Message): msg is Message<StateViewPayload> {
  return msg.kind === "StateView";
}

export function isCardView(msg: Message): msg is Message<CardViewPayload> {
  return msg.kind === "CardView";
}

/** Canonical identity for a filter, used for rail parity checks. */
export function filterKey(f: FilterSpec): string {
  return JSON.stringify([f.column, f.op, f.values ?? [], f.lo ?? null, f.hi ?? null]);
}
