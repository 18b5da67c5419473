"""Event-sourced analytical session state.

A session's state evolves only through StateDeltas (from chat, direct
manipulation, or the system); every applied delta appends one provenance
record carrying the resulting state hash, so any session can be replayed
and verified from its log. Also home to the m/v measurements feeding the
overload calculus, the forgotten-filter detector, and intent-triggered
workspace generation.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .data import (
    Dataset,
    FilterSpec,
    QuerySpec,
    SchemaError,
    detect_anomalies,
    matching_rows,
    run_query,
)
from .grammar import IntentCommand

PROVENANCE_HEADER = "keyhole-provenance v1"
SNAPSHOT_HEADER = "keyhole-snapshot v1"

ACTIONS = (
    "AddFilter",
    "RemoveFilter",
    "SetGroupBy",
    "SetTimeRange",
    "SetCohort",
    "AddCard",
    "MoveCard",
    "LinkCards",
    "SetZoom",
    "PinCard",
    "RemoveCard",
)

CARD_KINDS = ("chart", "table", "summary", "hypothesis")
ORIGINS = ("chat", "direct", "system")
VIEW_MODES = ("chat_only", "rail", "canvas")

DEFAULT_FORGOTTEN_LOOKBACK = 10


class SessionError(ValueError):
    """Invalid delta or session operation."""


class CorruptionError(SessionError):
    """Provenance log fails hash verification; carries the offending seq."""

    def __init__(self, message: str, seq: int):
        super().__init__(f"seq {seq}: {message}")
        self.seq = seq


class VersionError(SessionError):
    """Persisted file carries an unsupported format version."""


@dataclass(frozen=True)
class Card:
    id: str
    kind: str
    position: Tuple[float, float] = (0.0, 0.0)
    size: Tuple[float, float] = (4.0, 3.0)
    query: Optional[QuerySpec] = None
    zoom_level: int = 1
    parent_links: Tuple[str, ...] = ()
    pinned: bool = False
    visible: bool = True

    def __post_init__(self) -> None:
        if self.kind not in CARD_KINDS:
            raise SessionError(f"unknown card kind: {self.kind!r}")
        if self.zoom_level not in (0, 1, 2):
            raise SessionError("zoom_level must be 0, 1, or 2")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "position": list(self.position),
            "size": list(self.size),
            "query": self.query.to_dict() if self.query else None,
            "zoom_level": self.zoom_level,
            "parent_links": list(self.parent_links),
            "pinned": self.pinned,
            "visible": self.visible,
        }

    @staticmethod
    def from_dict(d: dict) -> "Card":
        return Card(
            id=d["id"],
            kind=d["kind"],
            position=tuple(d.get("position", (0.0, 0.0))),
            size=tuple(d.get("size", (4.0, 3.0))),
            query=QuerySpec.from_dict(d["query"]) if d.get("query") else None,
            zoom_level=d.get("zoom_level", 1),
            parent_links=tuple(d.get("parent_links", ())),
            pinned=d.get("pinned", False),
            visible=d.get("visible", True),
        )


@dataclass(frozen=True)
class SessionState:
    session_id: str
    active_filters: Tuple[FilterSpec, ...] = ()
    group_by: Optional[Tuple[str, ...]] = None
    time_range: Optional[Tuple[str, str]] = None
    cohort: Optional[str] = None
    aggregation_level: str = "raw"
    cards: Tuple[Card, ...] = ()
    rail_enabled: bool = True

    def canonical_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "active_filters": [f.to_dict() for f in self.active_filters],
            "group_by": list(self.group_by) if self.group_by else None,
            "time_range": list(self.time_range) if self.time_range else None,
            "cohort": self.cohort,
            "aggregation_level": self.aggregation_level,
            "cards": [c.to_dict() for c in self.cards],
            "rail_enabled": self.rail_enabled,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def state_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def card_by_id(self, card_id: str) -> Card:
        for card in self.cards:
            if card.id == card_id:
                return card
        raise SessionError(f"no card with id {card_id!r}")

    @staticmethod
    def from_dict(d: dict) -> "SessionState":
        return SessionState(
            session_id=d["session_id"],
            active_filters=tuple(FilterSpec.from_dict(f) for f in d.get("active_filters", [])),
            group_by=tuple(d["group_by"]) if d.get("group_by") else None,
            time_range=tuple(d["time_range"]) if d.get("time_range") else None,
            cohort=d.get("cohort"),
            aggregation_level=d.get("aggregation_level", "raw"),
            cards=tuple(Card.from_dict(c) for c in d.get("cards", [])),
            rail_enabled=d.get("rail_enabled", True),
        )


@dataclass(frozen=True)
class StateDelta:
    action: str
    payload: dict = field(default_factory=dict)
    origin: str = "direct"
    confidence: float = 1.0
    utterance: Optional[str] = None

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise SessionError(f"unknown action: {self.action!r}")
        if self.origin not in ORIGINS:
            raise SessionError(f"unknown origin: {self.origin!r}")
        if not 0.0 < self.confidence <= 1.0:
            raise SessionError("confidence must lie in (0, 1]")
        if self.origin == "direct" and self.confidence != 1.0:
            raise SessionError("direct deltas carry confidence 1.0")

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "payload": self.payload,
            "origin": self.origin,
            "confidence": self.confidence,
            "utterance": self.utterance,
        }

    @staticmethod
    def from_dict(d: dict) -> "StateDelta":
        return StateDelta(
            action=d["action"],
            payload=d.get("payload", {}),
            origin=d.get("origin", "direct"),
            confidence=d.get("confidence", 1.0),
            utterance=d.get("utterance"),
        )


@dataclass(frozen=True)
class ProvenanceRecord:
    seq: int
    timestamp: float
    delta: StateDelta
    resulting_hash: str

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "delta": self.delta.to_dict(),
            "resulting_hash": self.resulting_hash,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_dict(d: dict) -> "ProvenanceRecord":
        return ProvenanceRecord(
            seq=d["seq"],
            timestamp=d["timestamp"],
            delta=StateDelta.from_dict(d["delta"]),
            resulting_hash=d["resulting_hash"],
        )


# ---------------------------------------------------------------------------
# Pure transition function


def transition(state: SessionState, delta: StateDelta, dataset: Optional[Dataset] = None) -> SessionState:
    """Apply one delta, returning the (possibly unchanged) next state.

    RemoveFilter of an absent filter and AddFilter of a duplicate are no-ops.
    Schema violations and dangling card references raise."""
    action = delta.action
    p = delta.payload

    if action == "AddFilter":
        f = FilterSpec.from_dict(p["filter"])
        if dataset is not None and f.column not in dataset.column_names():
            raise SchemaError(f"unknown column: {f.column!r}")
        if f in state.active_filters:
            return state
        return replace(state, active_filters=state.active_filters + (f,))

    if action == "RemoveFilter":
        if "filter" in p:
            target = FilterSpec.from_dict(p["filter"])
            kept = tuple(f for f in state.active_filters if f != target)
        elif "index" in p:
            idx = p["index"]
            if not 0 <= idx < len(state.active_filters):
                return state
            kept = state.active_filters[:idx] + state.active_filters[idx + 1:]
        elif "column" in p:
            kept = tuple(f for f in state.active_filters if f.column != p["column"])
        else:
            raise SessionError("RemoveFilter requires a filter, index, or column")
        if kept == state.active_filters:
            return state
        return replace(state, active_filters=kept)

    if action == "SetGroupBy":
        columns = p.get("columns")
        if columns and dataset is not None:
            for col in columns:
                if col not in dataset.column_names():
                    raise SchemaError(f"unknown column: {col!r}")
        return replace(state, group_by=tuple(columns) if columns else None)

    if action == "SetTimeRange":
        if p.get("start") is None and p.get("end") is None:
            return replace(state, time_range=None)
        start, end = p["start"], p["end"]
        if start > end:
            raise SessionError("time_range start must not exceed end")
        return replace(state, time_range=(start, end))

    if action == "SetCohort":
        return replace(state, cohort=p.get("name"))

    if action == "AddCard":
        card = Card.from_dict(p["card"])
        existing = {c.id for c in state.cards}
        if card.id in existing:
            raise SessionError(f"duplicate card id: {card.id!r}")
        for parent in card.parent_links:
            if parent not in existing:
                raise SessionError(f"parent link to unknown card: {parent!r}")
        return replace(state, cards=state.cards + (card,))

    if action == "MoveCard":
        card = state.card_by_id(p["id"])
        new_pos = tuple(p["position"])
        if new_pos == card.position:
            return state
        return _replace_card(state, replace(card, position=new_pos))

    if action == "LinkCards":
        source, target = p["source"], p["target"]
        state.card_by_id(source)
        card = state.card_by_id(target)
        if source in card.parent_links:
            return state
        return _replace_card(state, replace(card, parent_links=card.parent_links + (source,)))

    if action == "SetZoom":
        card = state.card_by_id(p["id"])
        level = p["level"]
        if level not in (0, 1, 2):
            raise SessionError("zoom level must be 0, 1, or 2")
        if level == card.zoom_level:
            return state
        return _replace_card(state, replace(card, zoom_level=level))

    if action == "PinCard":
        card = state.card_by_id(p["id"])
        pinned = bool(p.get("pinned", True))
        if pinned == card.pinned:
            return state
        return _replace_card(state, replace(card, pinned=pinned))

    if action == "RemoveCard":
        card = state.card_by_id(p["id"])
        kept = tuple(c for c in state.cards if c.id != card.id)
        # Drop dangling parent links along with the card.
        kept = tuple(
            replace(c, parent_links=tuple(l for l in c.parent_links if l != card.id))
            if card.id in c.parent_links
            else c
            for c in kept
        )
        return replace(state, cards=kept)

    raise SessionError(f"unknown action: {action!r}")


def _replace_card(state: SessionState, card: Card) -> SessionState:
    return replace(state, cards=tuple(card if c.id == card.id else c for c in state.cards))


# ---------------------------------------------------------------------------
# Session: single writer over a provenance log


class Session:
    """One analytical session: current state plus its append-only log."""

    def __init__(
        self,
        session_id: str,
        dataset: Optional[Dataset] = None,
        clock: Callable[[], float] = time.time,
    ):
        self.state = SessionState(session_id=session_id)
        self.dataset = dataset
        self.log: List[ProvenanceRecord] = []
        self._clock = clock

    def apply(self, delta: StateDelta) -> ProvenanceRecord:
        """Apply a delta and append exactly one provenance record.

        No-op deltas are still recorded (with unchanged hash) so the log is a
        complete account of what was requested."""
        new_state = transition(self.state, delta, self.dataset)
        self.state = new_state
        record = ProvenanceRecord(
            seq=len(self.log) + 1,
            timestamp=self._clock(),
            delta=delta,
            resulting_hash=new_state.state_hash,
        )
        self.log.append(record)
        return record


def replay(
    log: Sequence[ProvenanceRecord],
    initial: SessionState,
    dataset: Optional[Dataset] = None,
) -> SessionState:
    """Rebuild state from a log, verifying every recorded hash."""
    state = initial
    expected_seq = 1
    for record in log:
        if record.seq != expected_seq:
            raise CorruptionError(f"expected seq {expected_seq}, got {record.seq}", seq=record.seq)
        state = transition(state, record.delta, dataset)
        if state.state_hash != record.resulting_hash:
            raise CorruptionError("resulting_hash does not match replayed state", seq=record.seq)
        expected_seq += 1
    return state


# ---------------------------------------------------------------------------
# Persistence: append-only provenance log and state snapshots


def write_provenance(log: Sequence[ProvenanceRecord]) -> str:
    lines = [PROVENANCE_HEADER]
    lines.extend(r.canonical_json() for r in log)
    return "\n".join(lines) + "\n"


def read_provenance(text: str) -> List[ProvenanceRecord]:
    lines = text.splitlines()
    if not lines:
        raise CorruptionError("empty provenance file", seq=0)
    if lines[0] != PROVENANCE_HEADER:
        raise VersionError(f"unsupported provenance header: {lines[0]!r}")
    records = []
    for i, line in enumerate(lines[1:], start=1):
        if not line.strip():
            continue
        try:
            records.append(ProvenanceRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError) as exc:
            raise CorruptionError(f"unreadable record: {exc}", seq=i)
    return records


def write_snapshot(state: SessionState) -> str:
    return SNAPSHOT_HEADER + "\n" + state.canonical_json() + "\n"


def read_snapshot(text: str) -> SessionState:
    lines = text.splitlines()
    if not lines:
        raise CorruptionError("empty snapshot file", seq=0)
    if lines[0] != SNAPSHOT_HEADER:
        raise VersionError(f"unsupported snapshot header: {lines[0]!r}")
    body = "\n".join(lines[1:]).strip()
    try:
        return SessionState.from_dict(json.loads(body))
    except (json.JSONDecodeError, KeyError) as exc:
        raise CorruptionError(f"unreadable snapshot: {exc}", seq=0)


# ---------------------------------------------------------------------------
# Measuring m and v


def _non_default_state_vars(state: SessionState) -> int:
    return (
        (state.time_range is not None)
        + (state.cohort is not None)
        + (state.group_by is not None and len(state.group_by) > 0)
        + (state.aggregation_level != "raw")
    )


def _visible_data_cards(state: SessionState) -> List[Card]:
    return [c for c in state.cards if c.visible and c.kind in ("chart", "table")]


def measure_m(state: SessionState) -> int:
    """Count of task-relevant items: active filters, comparison views (visible
    chart/table cards beyond the first), hypothesis cards, and non-default
    state variables."""
    comparison_views = max(0, len(_visible_data_cards(state)) - 1)
    hypothesis_cards = sum(1 for c in state.cards if c.kind == "hypothesis")
    return (
        len(state.active_filters)
        + comparison_views
        + hypothesis_cards
        + _non_default_state_vars(state)
    )


def rail_tag_count(state: SessionState) -> int:
    return len(state.active_filters) + _non_default_state_vars(state)


def _intersects(card: Card, viewport: Tuple[float, float, float, float]) -> bool:
    vx, vy, vw, vh = viewport
    cx, cy = card.position
    cw, ch = card.size
    return cx < vx + vw and cx + cw > vx and cy < vy + vh and cy + ch > vy


def measure_v(
    state: SessionState,
    viewport: Tuple[float, float, float, float] = (0.0, 0.0, 100.0, 100.0),
    mode: str = "rail",
) -> int:
    """Count of task-relevant items simultaneously visible.

    chat_only sees one item (the current response); rail adds one tag per
    filter and non-default state variable; canvas counts rail tags plus the
    relevant cards whose rectangles intersect the viewport."""
    if mode not in VIEW_MODES:
        raise SessionError(f"unknown view mode: {mode!r}")
    vw, vh = viewport[2], viewport[3]
    if vw <= 0 or vh <= 0:
        raise SessionError("viewport must be non-degenerate")
    if mode == "chat_only":
        return 1
    if mode == "rail":
        return min(1 + rail_tag_count(state), measure_m(state) + 1)
    on_screen = [c for c in _visible_data_cards(state) if _intersects(c, viewport)]
    comparison_visible = max(0, len(on_screen) - 1)
    hypotheses_visible = sum(
        1 for c in state.cards if c.kind == "hypothesis" and c.visible and _intersects(c, viewport)
    )
    v = rail_tag_count(state) + comparison_visible + hypotheses_visible
    return min(v, measure_m(state) + 1)


# ---------------------------------------------------------------------------
# Forgotten-filter detection


def _delta_references_filter(delta: StateDelta, f: FilterSpec) -> bool:
    p = delta.payload
    if delta.action in ("AddFilter", "RemoveFilter"):
        mentioned = p.get("column") or (p.get("filter") or {}).get("column")
        if mentioned == f.column:
            return True
    text = (delta.utterance or "").lower()
    if text and f.column.lower() in text:
        return True
    if text and any(isinstance(v, str) and v.lower() in text for v in f.values):
        return True
    return False


def detect_forgotten_filters(
    state: SessionState,
    log: Sequence[ProvenanceRecord],
    dataset: Optional[Dataset] = None,
    k: int = DEFAULT_FORGOTTEN_LOOKBACK,
) -> List[FilterSpec]:
    """Active filters unreferenced by any of the last k interactions that
    still change the current query result."""
    if k < 1:
        raise SessionError("lookback k must be at least 1")
    recent = log[-k:]
    forgotten = []
    for f in state.active_filters:
        if any(_delta_references_filter(r.delta, f) for r in recent):
            continue
        if dataset is not None:
            with_all = matching_rows(dataset, state.active_filters)
            without = matching_rows(dataset, [g for g in state.active_filters if g != f])
            if with_all == without:
                continue  # filter has no effect on the result
        forgotten.append(f)
    return forgotten


# ---------------------------------------------------------------------------
# Mise en place: intent-triggered workspace generation

MAX_WORKSPACE_CARDS = 4
MAX_WORKSPACE_FILTERS = 3
WORKSPACE_CARD_SIZE = (4.0, 3.0)
WORKSPACE_GRID = ((0.0, 0.0), (5.0, 0.0), (0.0, 4.0), (5.0, 4.0))


@dataclass(frozen=True)
class WorkspaceResult:
    state: SessionState
    records: Tuple[ProvenanceRecord, ...]
    explanation: str


def _topic_tokens(topic: str) -> List[str]:
    return [t for t in "".join(ch if ch.isalnum() else " " for ch in topic.lower()).split() if t]


def score_columns(ds: Dataset, topic: str) -> List[Tuple[str, float]]:
    """Relevance ranking: keyword match on the column name (2), type affinity
    for measures (1), plus an inverse-cardinality bonus for categoricals."""
    tokens = _topic_tokens(topic)
    scored = []
    for name, kind in ds.schema:
        lowered = name.lower()
        score = 0.0
        if any(tok in lowered or lowered in tok for tok in tokens):
            score += 2.0
        if kind in ("number", "boolean"):
            score += 1.0
        if kind in ("string", "boolean"):
            present = [v for v in ds.columns[name] if v is not None]
            distinct = len(set(present))
            if distinct:
                score += 1.0 / (1.0 + distinct)
        scored.append((name, score))
    scored.sort(key=lambda pair: (-pair[1], ds.column_names().index(pair[0])))
    return scored


def _dominant_value(ds: Dataset, column: str):
    counts: Dict = {}
    for v in ds.columns[column]:
        if v is None:
            continue
        counts[v] = counts.get(v, 0) + 1
    if not counts:
        return None
    return max(counts, key=lambda k: (counts[k], str(k)))


def plan_workspace(intent: IntentCommand, ds: Dataset) -> Tuple[List[StateDelta], str]:
    """Translate an analyze intent into system deltas: up to four cards on a
    2x2 grid and up to three pre-configured filters on the top-scoring
    categorical columns."""
    if intent.verb != "analyze":
        raise SessionError("workspace generation requires an analyze intent")
    topic = intent.args.get("topic", "")
    tokens = _topic_tokens(topic)
    scored = score_columns(ds, topic)
    keyword_hits = [
        name
        for name, _ in scored
        if any(tok in name.lower() or name.lower() in tok for tok in tokens)
    ]
    if not keyword_hits:
        return [], f"no columns match topic {topic!r}"

    types = dict(ds.schema)
    numeric = [n for n, _ in scored if types[n] == "number"]
    timestamps = [n for n, _ in scored if types[n] == "timestamp"]
    categorical = [n for n, _ in scored if types[n] in ("string", "boolean")]

    focus = keyword_hits[0]
    measure = focus if types[focus] == "number" else (numeric[0] if numeric else None)

    confidence = intent.confidence
    deltas: List[StateDelta] = []
    cards: List[Card] = []

    def add_card(card_id: str, kind: str, query: Optional[QuerySpec]) -> None:
        if len(cards) >= MAX_WORKSPACE_CARDS:
            return
        card = Card(
            id=card_id,
            kind=kind,
            position=WORKSPACE_GRID[len(cards)],
            size=WORKSPACE_CARD_SIZE,
            query=query,
        )
        cards.append(card)

    if measure is not None:
        if timestamps:
            add_card(
                "trend",
                "chart",
                QuerySpec(group_by=(timestamps[0],), aggregate="mean", target=measure, time_bucket="month"),
            )
        else:
            add_card("trend", "chart", QuerySpec(aggregate="mean", target=measure))
    if categorical and measure is not None:
        add_card(
            "breakdown",
            "chart",
            QuerySpec(group_by=(categorical[0],), aggregate="mean", target=measure),
        )
    elif categorical:
        add_card("breakdown", "chart", QuerySpec(group_by=(categorical[0],), aggregate="count"))
    if categorical:
        add_card("cohort", "table", QuerySpec(group_by=(categorical[0],), aggregate="count"))
    if measure is not None and (timestamps or categorical):
        # Anomaly scanning needs a grouped series to compare points against.
        series_col = timestamps[0] if timestamps else categorical[0]
        add_card(
            "anomalies",
            "summary",
            QuerySpec(group_by=(series_col,), aggregate="mean", target=measure),
        )

    for card in cards:
        deltas.append(
            StateDelta(action="AddCard", payload={"card": card.to_dict()}, origin="system", confidence=confidence)
        )

    filter_columns = [n for n in categorical if n != focus][:MAX_WORKSPACE_FILTERS]
    # A focused categorical column still deserves a pre-configured filter.
    if types.get(focus) in ("string", "boolean") and focus not in filter_columns:
        filter_columns = [focus] + filter_columns[: MAX_WORKSPACE_FILTERS - 1]
    for col in filter_columns:
        value = _dominant_value(ds, col)
        if value is None:
            continue
        spec = FilterSpec(column=col, op="eq", values=(value,))
        deltas.append(
            StateDelta(action="AddFilter", payload={"filter": spec.to_dict()}, origin="system", confidence=confidence)
        )
    explanation = f"workspace for {topic!r}: {len(cards)} cards, {len(filter_columns)} filters"
    return deltas, explanation


def mise_en_place(
    intent: IntentCommand,
    ds: Dataset,
    session_id: str = "workspace",
    clock: Callable[[], float] = time.time,
) -> WorkspaceResult:
    """Generate a prepared workspace session from an analyze intent."""
    deltas, explanation = plan_workspace(intent, ds)
    session = Session(session_id, dataset=ds, clock=clock)
    for delta in deltas:
        session.apply(delta)
    return WorkspaceResult(state=session.state, records=tuple(session.log), explanation=explanation)


def workspace_anomaly_markers(ds: Dataset, state: SessionState, threshold: float = 2.0) -> Dict[str, list]:
    """Per-card anomaly markers for the generated workspace's chart cards."""
    markers: Dict[str, list] = {}
    for card in state.cards:
        if card.kind != "chart" or card.query is None or not card.query.group_by:
            continue
        result = run_query(ds, card.query)
        series = [float(r[-1]) for r in result.rows if isinstance(r[-1], (int, float))]
        if len(series) >= 3:
            markers[card.id] = detect_anomalies(series, threshold)
    return markers
