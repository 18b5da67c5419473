"""Session gateway: protocol message handling, telemetry, persistence.

Composes the calculus, session engine, data engine, and grammar behind a
versioned message protocol. Each state-mutating request yields exactly one
StateView carrying the new state hash and a fresh overload report; telemetry
keeps one report per provenance record plus the initial zero report.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import grammar
from .calculus import (
    CalculusParams,
    CapacityModel,
    OverloadReport,
    build_report,
    recommend_modality,
)
from .cost import DEFAULT_COSTS, ModalityCostTable, OperationKind
from .data import (
    Dataset,
    FilterSpec,
    QuerySpec,
    characterize_selection,
    ingest_csv,
    run_query,
    summarize_result,
    zoom_levels,
)
from .grammar import IntentCommand, Tier, TierBounds, UnparseableError
from .harness import AgentModel
from .session import (
    Card,
    ProvenanceRecord,
    Session,
    SessionError,
    SessionState,
    StateDelta,
    detect_forgotten_filters,
    measure_m,
    measure_v,
    plan_workspace,
    read_snapshot,
    write_provenance,
    write_snapshot,
)

PROTOCOL_VERSION = "v1"
MESSAGE_KINDS = (
    "Utterance",
    "Delta",
    "SelectionQuestion",
    "StateView",
    "TelemetryView",
    "CardView",
    "Error",
    "Ack",
)

DEFAULT_VIEWPORT = (0.0, 0.0, 100.0, 100.0)


class GatewayError(ValueError):
    """Protocol-level failure (unknown session, malformed message)."""


@dataclass(frozen=True)
class GatewayConfig:
    params: CalculusParams = CalculusParams()
    capacity: CapacityModel = CapacityModel()
    tier_bounds: TierBounds = TierBounds()
    cost_table: ModalityCostTable = ModalityCostTable()
    agent: AgentModel = AgentModel()
    view_mode: str = "rail"  # chat_only | rail | canvas
    viewport: Tuple[float, float, float, float] = DEFAULT_VIEWPORT

    @staticmethod
    def from_dict(d: dict) -> "GatewayConfig":
        calc = d.get("calculus", {})
        caps = d.get("capacity", {})
        tiers = d.get("tiers", {})
        costs = d.get("costs")
        agent = d.get("agent", {})
        table = ModalityCostTable()
        if costs:
            table = ModalityCostTable(
                costs={OperationKind(k): tuple(v) for k, v in costs.items()}
            )
        return GatewayConfig(
            params=CalculusParams(
                alpha=calc.get("alpha", 1.0),
                lambda_=calc.get("lambda", 0.5),
                gg_threshold=calc.get("gg_threshold", 3.0),
            ),
            capacity=CapacityModel(
                base_capacity=caps.get("base_capacity", 4.0),
                expertise=caps.get("expertise", 0.0),
                chunking_aid=caps.get("chunking_aid", 0.0),
            ),
            tier_bounds=TierBounds(
                silent=tiers.get("silent", 0.9), inferred=tiers.get("inferred", 0.6)
            ),
            cost_table=table,
            agent=AgentModel(
                wm_capacity=agent.get("wm_capacity", 4),
                primacy_multiplier=agent.get("primacy_multiplier", 1.5),
                recency_multiplier=agent.get("recency_multiplier", 1.0),
                retrieval_cost=agent.get("retrieval_cost", 3.0),
                anchor_strength=agent.get("anchor_strength", 0.0),
                lambda_=agent.get("lambda", 0.5),
            ),
            view_mode=d.get("view_mode", "rail"),
            viewport=tuple(d.get("viewport", DEFAULT_VIEWPORT)),
        )

    @staticmethod
    def load(path: str) -> "GatewayConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return GatewayConfig.from_dict(json.load(fh))


def make_message(kind: str, session_id: str, seq: int, payload: dict) -> dict:
    if kind not in MESSAGE_KINDS:
        raise GatewayError(f"unknown message kind: {kind!r}")
    return {
        "version": PROTOCOL_VERSION,
        "kind": kind,
        "session_id": session_id,
        "seq": seq,
        "payload": payload,
    }


class GatewaySession:
    """One live session: engine state, telemetry series, tag metadata."""

    def __init__(
        self,
        session_id: str,
        dataset: Optional[Dataset],
        config: GatewayConfig,
        clock: Callable[[], float] = time.time,
    ):
        self.config = config
        self.session = Session(session_id, dataset=dataset, clock=clock)
        self.dataset = dataset
        self.telemetry: List[OverloadReport] = [self._report()]
        self.filter_meta: Dict[str, Tuple[str, float]] = {}  # filter json -> (origin, confidence)
        self.out_seq = 0
        self._card_counter = 0

    # -- helpers

    def next_seq(self) -> int:
        self.out_seq += 1
        return self.out_seq

    def new_card_id(self, prefix: str) -> str:
        self._card_counter += 1
        return f"{prefix}-{self._card_counter}"

    def _report(self) -> OverloadReport:
        state = self.session.state
        m = measure_m(state)
        v = measure_v(state, self.config.viewport, self.config.view_mode)
        return build_report(m, v, self.config.capacity, self.config.params)

    def apply(self, deltas: Sequence[StateDelta]) -> List[ProvenanceRecord]:
        """Apply deltas; append one telemetry report per provenance record."""
        records = []
        for delta in deltas:
            record = self.session.apply(delta)
            records.append(record)
            self.telemetry.append(self._report())
            if delta.action == "AddFilter":
                key = json.dumps(delta.payload["filter"], sort_keys=True)
                self.filter_meta[key] = (delta.origin, delta.confidence)
        return records

    def state_view(self) -> dict:
        state = self.session.state
        report = self.telemetry[-1]
        tags = []
        for f in state.active_filters:
            key = json.dumps(f.to_dict(), sort_keys=True)
            origin, confidence = self.filter_meta.get(key, ("direct", 1.0))
            tags.append(
                {
                    "kind": "filter",
                    "label": _filter_label(f),
                    "filter": f.to_dict(),
                    "removable": True,
                    "origin": origin,
                    "confidence": confidence,
                }
            )
        for label, value in _state_var_tags(state):
            tags.append(
                {
                    "kind": "statevar",
                    "label": f"{label}: {value}",
                    "removable": True,
                    "origin": "direct",
                    "confidence": 1.0,
                }
            )
        forgotten = detect_forgotten_filters(state, self.session.log, self.dataset)
        return {
            "state_hash": state.state_hash,
            "rail_tags": tags,
            "cards": [c.to_dict() for c in state.cards],
            "overload": report.to_dict(),
            "forgotten_filters": [f.to_dict() for f in forgotten],
            "recommendation": recommend_modality(
                report.o, self.config.params.gg_threshold
            ).value,
        }


def _filter_label(f: FilterSpec) -> str:
    if f.op == "range":
        return f"{f.column} between {f.lo} and {f.hi}"
    symbol = {"eq": "=", "neq": "!=", "in": "in"}[f.op]
    values = ", ".join(str(v) for v in f.values)
    return f"{f.column} {symbol} {values}"


def _state_var_tags(state: SessionState):
    if state.time_range is not None:
        yield "time", f"{state.time_range[0]}..{state.time_range[1]}"
    if state.cohort is not None:
        yield "cohort", state.cohort
    if state.group_by:
        yield "group by", ", ".join(state.group_by)
    if state.aggregation_level != "raw":
        yield "aggregation", state.aggregation_level


class Gateway:
    """Serves any number of independent sessions; deltas within a session are
    applied in message order (single logical writer per session)."""

    def __init__(self, config: GatewayConfig = GatewayConfig(), clock: Callable[[], float] = time.time):
        self.config = config
        self.sessions: Dict[str, GatewaySession] = {}
        self._clock = clock
        self.push_listeners: List[Callable[[dict], None]] = []

    # -- session lifecycle

    def create_session(self, session_id: str, dataset: Optional[Dataset] = None) -> GatewaySession:
        if session_id in self.sessions:
            raise GatewayError(f"session already exists: {session_id!r}")
        gs = GatewaySession(session_id, dataset, self.config, clock=self._clock)
        self.sessions[session_id] = gs
        return gs

    def get_session(self, session_id: str) -> GatewaySession:
        if session_id not in self.sessions:
            raise GatewayError(f"unknown session: {session_id!r}")
        return self.sessions[session_id]

    def _push(self, message: dict) -> None:
        for listener in self.push_listeners:
            listener(message)

    # -- message dispatch

    def handle_message(self, message: dict) -> List[dict]:
        """Dispatch one protocol message; returns the response messages
        (responses are also forwarded to push listeners when they are views)."""
        if message.get("version") != PROTOCOL_VERSION:
            return [
                make_message(
                    "Error",
                    message.get("session_id", ""),
                    0,
                    {"error": f"unsupported protocol version: {message.get('version')!r}"},
                )
            ]
        kind = message.get("kind")
        session_id = message.get("session_id", "")
        payload = message.get("payload", {})
        try:
            if kind == "Utterance":
                out = self.handle_utterance(session_id, payload.get("text", ""))
            elif kind == "Delta":
                out = self.handle_delta(session_id, StateDelta.from_dict(payload))
            elif kind == "SelectionQuestion":
                out = self.handle_selection_question(
                    session_id,
                    payload.get("row_ids", []),
                    payload.get("text", ""),
                    payload.get("state_hash"),
                )
            elif kind == "TelemetryView":
                out = [self.get_telemetry(session_id)]
            else:
                raise GatewayError(f"unhandled message kind: {kind!r}")
        except (GatewayError, SessionError, ValueError) as exc:
            gs = self.sessions.get(session_id)
            seq = gs.next_seq() if gs else 0
            out = [make_message("Error", session_id, seq, {"error": str(exc)})]
        for msg in out:
            if msg["kind"] in ("StateView", "TelemetryView", "CardView"):
                self._push(msg)
        return out

    # -- operations

    def handle_utterance(self, session_id: str, text: str) -> List[dict]:
        gs = self.get_session(session_id)
        schema = gs.dataset.column_names() if gs.dataset else ()
        try:
            cmd = grammar.parse(text, schema)
        except UnparseableError as exc:
            return [
                make_message(
                    "Error",
                    session_id,
                    gs.next_seq(),
                    {
                        "error": str(exc),
                        "alternatives": [
                            {"command": grammar.format(a), "confidence": a.confidence}
                            for a in exc.alternatives
                            if a.is_resolved()
                        ],
                    },
                )
            ]
        tier = grammar.confidence_tier(cmd, self.config.tier_bounds)
        if tier is Tier.NEEDS_CONFIRMATION:
            return [
                make_message(
                    "Ack",
                    session_id,
                    gs.next_seq(),
                    {
                        "status": "needs_confirmation",
                        "command": grammar.format(cmd) if cmd.is_resolved() else text,
                        "confidence": cmd.confidence,
                        "tier": tier.value,
                        "alternatives": [
                            {"command": grammar.format(a), "confidence": a.confidence}
                            for a in cmd.alternatives
                            if a.is_resolved()
                        ],
                    },
                )
            ]
        if cmd.deictic_slots:
            raise GatewayError(
                "deictic reference needs a selection; send a SelectionQuestion or anchor a card"
            )
        deltas, extra_payload = self._deltas_for_command(gs, cmd, text)
        ack = make_message(
            "Ack",
            session_id,
            gs.next_seq(),
            {
                "status": "applied" if deltas else "answered",
                "command": grammar.format(cmd),
                "confidence": cmd.confidence,
                "tier": tier.value,
                **extra_payload,
            },
        )
        out = [ack]
        if deltas:
            gs.apply(deltas)
            out.append(make_message("StateView", session_id, gs.next_seq(), gs.state_view()))
        return out

    def _deltas_for_command(
        self, gs: GatewaySession, cmd: IntentCommand, text: str
    ) -> Tuple[List[StateDelta], dict]:
        verb = cmd.verb
        args = cmd.args
        conf = cmd.confidence
        state = gs.session.state

        def chat_delta(action: str, payload: dict) -> StateDelta:
            return StateDelta(
                action=action, payload=payload, origin="chat", confidence=conf, utterance=text
            )

        if verb == "filter":
            spec = _filter_from_args(args)
            return [chat_delta("AddFilter", {"filter": spec.to_dict()})], {}
        if verb == "remove":
            payload = {"index": args["index"]} if "index" in args else {"column": args["column"]}
            return [chat_delta("RemoveFilter", payload)], {}
        if verb in ("show", "breakdown"):
            dimension = args["dimension"]
            if verb == "show" and gs.dataset and gs.dataset.column_type(args["measure"]) == "number":
                query = QuerySpec(group_by=(dimension,), aggregate="mean", target=args["measure"])
            else:
                query = QuerySpec(group_by=(dimension,), aggregate="count")
            card = Card(
                id=gs.new_card_id(verb),
                kind="chart",
                position=(5.0 * len(state.cards), 0.0),
                query=query,
                parent_links=(args["anchor_card"],) if "anchor_card" in args and args["anchor_card"] else (),
            )
            return [chat_delta("AddCard", {"card": card.to_dict()})], {}
        if verb == "compare":
            card = Card(id=gs.new_card_id("compare"), kind="chart", position=(5.0 * len(state.cards), 0.0))
            return [chat_delta("AddCard", {"card": card.to_dict()})], {}
        if verb == "zoom":
            if not state.cards:
                raise GatewayError("zoom requires at least one card")
            card = state.cards[-1]
            step = -1 if args["direction"] == "in" else 1
            # Zooming "in" moves toward raw rows (level 2), "out" toward summary.
            level = max(0, min(2, card.zoom_level + (1 if args["direction"] == "in" else -1)))
            return [chat_delta("SetZoom", {"id": card.id, "level": level})], {}
        if verb == "summarize":
            if gs.dataset is None:
                raise GatewayError("summarize requires a bound dataset")
            query = QuerySpec(filters=state.active_filters, group_by=state.group_by or ())
            sentence = summarize_result(run_query(gs.dataset, query))
            return [], {"summary": sentence}
        if verb == "analyze":
            if gs.dataset is None:
                raise GatewayError("analyze requires a bound dataset")
            deltas, explanation = plan_workspace(cmd, gs.dataset)
            chat_deltas = [
                StateDelta(
                    action=d.action,
                    payload=d.payload,
                    origin="system",
                    confidence=conf,
                    utterance=text,
                )
                for d in deltas
            ]
            return chat_deltas, {"workspace": explanation}
        raise GatewayError(f"no handler for verb {verb!r}")

    def handle_delta(self, session_id: str, delta: StateDelta) -> List[dict]:
        gs = self.get_session(session_id)
        if delta.origin != "direct":
            raise GatewayError("handle_delta accepts direct-manipulation deltas only")
        gs.apply([delta])
        out = [make_message("StateView", session_id, gs.next_seq(), gs.state_view())]
        if delta.action == "SetZoom" and gs.dataset is not None:
            card = gs.session.state.card_by_id(delta.payload["id"])
            if card.query is not None:
                view = zoom_levels(gs.dataset, card.query, card.zoom_level)
                out.append(
                    make_message(
                        "CardView",
                        session_id,
                        gs.next_seq(),
                        {"card_id": card.id, "zoom": _zoom_payload(view)},
                    )
                )
        return out

    def handle_selection_question(
        self,
        session_id: str,
        row_ids: Sequence[int],
        text: str,
        state_hash: Optional[str] = None,
    ) -> List[dict]:
        gs = self.get_session(session_id)
        if gs.dataset is None:
            raise GatewayError("selection questions require a bound dataset")
        if not row_ids:
            raise GatewayError("selection question requires a non-empty selection")
        report = characterize_selection(gs.dataset, row_ids)
        payload = {
            "question": text,
            "row_ids": sorted(set(int(i) for i in row_ids)),
            "features": [
                {"column": f.column, "score": f.score, "detail": f.detail}
                for f in report.features
            ],
            "low_support": report.low_support,
            "note": report.note,
            "stale": bool(state_hash) and state_hash != gs.session.state.state_hash,
        }
        return [make_message("Ack", session_id, gs.next_seq(), payload)]

    def get_telemetry(self, session_id: str) -> dict:
        gs = self.get_session(session_id)
        return make_message(
            "TelemetryView",
            session_id,
            gs.next_seq(),
            {
                "series": [
                    {"seq": i, **report.to_dict()} for i, report in enumerate(gs.telemetry)
                ]
            },
        )

    # -- persistence

    def snapshot(self, session_id: str) -> str:
        gs = self.get_session(session_id)
        return write_snapshot(gs.session.state)

    def load(self, session_id: str, snapshot_text: str) -> GatewaySession:
        state = read_snapshot(snapshot_text)
        gs = self.sessions.get(session_id)
        if gs is None:
            gs = self.create_session(session_id)
        gs.session.state = state
        # A restore starts a fresh provenance epoch for this session.
        gs.session.log = []
        gs.telemetry = [gs._report()]
        return gs

    def provenance(self, session_id: str) -> str:
        return write_provenance(self.get_session(session_id).session.log)


def _filter_from_args(args: dict) -> FilterSpec:
    if args["op"] == "range":
        return FilterSpec(column=args["column"], op="range", lo=args["lo"], hi=args["hi"])
    return FilterSpec(column=args["column"], op=args["op"], values=tuple(args["values"]))


def _zoom_payload(view) -> dict:
    payload: dict = {"level": view.level}
    if view.table is not None:
        payload["columns"] = list(view.table.columns)
        payload["rows"] = [
            [None if v is None else (v.isoformat() if hasattr(v, "isoformat") else v) for v in row]
            for row in view.table.rows
        ]
    if view.chart is not None:
        payload["chart"] = view.chart
    if view.sentence is not None:
        payload["sentence"] = view.sentence
    return payload
