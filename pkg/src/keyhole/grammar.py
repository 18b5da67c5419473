"""Deterministic intent grammar.

Maps short command utterances to structured IntentCommands with a confidence
score, fuzzy column matching, alternatives for near-ties, and deictic slots
for references like "this" / "these" that need an explicit selection to
resolve. Free natural language is out of scope here; an external resolver
can be plugged in for that.

Grammar (keywords case-insensitive, columns case-sensitive then fuzzy):
    command   := filter | show | breakdown | compare | zoom | remove
               | summarize | analyze
    filter    := "filter" column ("="|"!="|"in") literal{","literal}
               | "filter" column "between" literal "and" literal
    show      := "show" measure "by" column
    breakdown := "break" ["this"|"that"] "down by" column
    compare   := "compare" ref "vs" ref
    zoom      := "zoom" ("in"|"out")
    remove    := "remove filter" (column | integer)
    summarize := "summarize"
    analyze   := "analyze" topic-text
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Protocol, Sequence, Tuple, Union

Literal = Union[int, float, str]

VERBS = ("show", "filter", "breakdown", "compare", "zoom", "remove", "summarize", "analyze")
DEICTIC_WORDS = frozenset({"this", "these", "that"})

MIN_PARSE_CONFIDENCE = 0.4
NEAR_TIE_MARGIN = 0.1


class GrammarError(ValueError):
    """Base error for parsing and resolution failures."""


class UnparseableError(GrammarError):
    """No parse reached the minimum confidence; carries the best alternatives."""

    def __init__(self, message: str, alternatives: Sequence["IntentCommand"] = ()):
        super().__init__(message)
        self.alternatives = list(alternatives)


class NeedsSelectionError(GrammarError):
    """A deictic command was resolved without a selection or anchor card."""


class Tier(str, Enum):
    SILENT = "Silent"
    INFERRED = "Inferred"
    NEEDS_CONFIRMATION = "NeedsConfirmation"


@dataclass(frozen=True)
class TierBounds:
    """Confidence cut points: [silent, 1.0], [inferred, silent), (0, inferred)."""

    silent: float = 0.9
    inferred: float = 0.6


@dataclass(frozen=True)
class IntentCommand:
    verb: str
    args: dict = field(default_factory=dict)
    confidence: float = 1.0
    alternatives: Tuple["IntentCommand", ...] = ()
    deictic_slots: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 < self.confidence <= 1.0:
            raise GrammarError("confidence must lie in (0, 1]")

    def is_resolved(self) -> bool:
        return not self.deictic_slots


class ExternalResolver(Protocol):
    """Pluggable free-language resolver; core functionality never requires one."""

    def resolve(self, utterance: str, schema: Sequence[str]) -> IntentCommand: ...


def damerau_levenshtein(a: str, b: str) -> int:
    """Restricted Damerau-Levenshtein distance (adjacent transposition = 1)."""
    la, lb = len(a), len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    prev2: List[int] = []
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                cur[j] = min(cur[j], prev2[j - 2] + 1)
        prev2, prev = prev, cur
    return prev[lb]


def _column_candidates(token: str, schema: Sequence[str]) -> List[Tuple[str, float]]:
    """All schema columns scored against a token, best first.

    Exact match scores 1.0; otherwise 1/(1 + dist/len(column)).
    """
    scored = []
    for col in schema:
        if col == token:
            scored.append((col, 1.0))
        else:
            dist = damerau_levenshtein(token, col)
            scored.append((col, 1.0 / (1.0 + dist / len(col))))
    scored.sort(key=lambda pair: (-pair[1], schema.index(pair[0])))
    return scored


_TOKEN_RE = re.compile(r'"[^"]*"|!=|=|[^\s,]+|,')


def _tokenize(utterance: str) -> List[str]:
    return _TOKEN_RE.findall(utterance)


def _parse_literal(token: str) -> Literal:
    if token.startswith('"') and token.endswith('"') and len(token) >= 2:
        return token[1:-1]
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    return token


def _format_literal(value: Literal) -> str:
    if isinstance(value, str):
        if value == "" or any(ch in value for ch in ' ,"') or _looks_numeric(value):
            return f'"{value}"'
        return value
    return repr(value) if isinstance(value, float) else str(value)


def _looks_numeric(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _literal_list(tokens: Sequence[str]) -> List[Literal]:
    values = []
    for tok in tokens:
        if tok == ",":
            continue
        values.append(_parse_literal(tok))
    return values


def _fail(msg: str, alternatives: Sequence[IntentCommand] = ()) -> "UnparseableError":
    return UnparseableError(msg, alternatives)


def parse(utterance: str, schema: Sequence[str] = ()) -> IntentCommand:
    """Parse an utterance into an IntentCommand.

    Exact grammar and column matches give confidence 1.0; fuzzy column
    matches lower it; near-tie columns are emitted as alternatives. Raises
    UnparseableError when the best parse stays below the minimum confidence.
    """
    if not utterance or not utterance.strip():
        raise _fail("empty utterance")
    tokens = _tokenize(utterance.strip())
    if not tokens:
        raise _fail("no tokens")
    head = tokens[0].lower()

    if head == "filter":
        return _parse_filter(tokens[1:], schema)
    if head == "show":
        return _parse_show(tokens[1:], schema)
    if head == "break":
        return _parse_breakdown(tokens[1:], schema)
    if head == "compare":
        return _parse_compare(tokens[1:])
    if head == "zoom":
        return _parse_zoom(tokens[1:])
    if head == "remove":
        return _parse_remove(tokens[1:], schema)
    if head == "summarize":
        return IntentCommand(verb="summarize")
    if head == "analyze":
        topic = utterance.strip()[len(tokens[0]):].strip()
        if not topic:
            raise _fail("analyze requires a topic")
        return IntentCommand(verb="analyze", args={"topic": topic})
    raise _fail(f"unknown verb: {tokens[0]!r}")


def _match_column(token: str, schema: Sequence[str]) -> Tuple[str, float, List[IntentCommand]]:
    if not schema:
        return token, 1.0, []
    # Strip quotes so quoted column names still match.
    bare = token[1:-1] if token.startswith('"') and token.endswith('"') else token
    candidates = _column_candidates(bare, schema)
    best_col, best_conf = candidates[0]
    return best_col, best_conf, candidates[1:]


def _with_column_alternatives(
    cmd: IntentCommand,
    runner_ups: List[Tuple[str, float]],
    rebuild,
) -> IntentCommand:
    alts = tuple(
        rebuild(col, conf)
        for col, conf in runner_ups
        if conf > MIN_PARSE_CONFIDENCE and conf >= cmd.confidence - NEAR_TIE_MARGIN
    )
    return replace(cmd, alternatives=alts)


def _parse_filter(rest: List[str], schema: Sequence[str]) -> IntentCommand:
    if len(rest) < 3:
        raise _fail("filter requires a column, operator, and value")
    col_token = rest[0]
    op_token = rest[1].lower()
    col, conf, runner_ups = _match_column(col_token, schema)

    if op_token in ("=", "!="):
        if len(rest) != 3:
            raise _fail("filter with =/!= takes exactly one value")
        op = "eq" if op_token == "=" else "neq"
        args = {"column": col, "op": op, "values": [_parse_literal(rest[2])]}
    elif op_token == "in":
        values = _literal_list(rest[2:])
        if not values:
            raise _fail("filter ... in requires at least one value")
        args = {"column": col, "op": "in", "values": values}
    elif op_token == "between":
        body = rest[2:]
        if len(body) != 3 or body[1].lower() != "and":
            raise _fail("filter ... between requires 'lo and hi'")
        args = {"column": col, "op": "range", "lo": _parse_literal(body[0]), "hi": _parse_literal(body[2])}
    else:
        raise _fail(f"unknown filter operator: {rest[1]!r}")

    if conf < MIN_PARSE_CONFIDENCE:
        raise _fail(f"no column close to {col_token!r}")
    cmd = IntentCommand(verb="filter", args=args, confidence=conf)
    return _with_column_alternatives(
        cmd, runner_ups, lambda c, k: IntentCommand(verb="filter", args={**args, "column": c}, confidence=k)
    )


def _parse_show(rest: List[str], schema: Sequence[str]) -> IntentCommand:
    by_positions = [i for i, t in enumerate(rest) if t.lower() == "by"]
    if not by_positions or by_positions[0] == 0 or by_positions[0] == len(rest) - 1:
        raise _fail("show requires 'show <measure> by <column>'")
    split = by_positions[0]
    measure_tok = " ".join(rest[:split])
    dim_tok = " ".join(rest[split + 1:])
    measure, m_conf, m_alts = _match_column(measure_tok, schema)
    dim, d_conf, d_alts = _match_column(dim_tok, schema)
    conf = m_conf * d_conf
    if conf < MIN_PARSE_CONFIDENCE:
        raise _fail("show could not match columns")
    args = {"measure": measure, "dimension": dim}
    cmd = IntentCommand(verb="show", args=args, confidence=conf)
    return _with_column_alternatives(
        cmd,
        [(c, k * m_conf) for c, k in d_alts],
        lambda c, k: IntentCommand(verb="show", args={**args, "dimension": c}, confidence=k),
    )


def _parse_breakdown(rest: List[str], schema: Sequence[str]) -> IntentCommand:
    slots: Tuple[str, ...] = ()
    idx = 0
    if idx < len(rest) and rest[idx].lower() in DEICTIC_WORDS:
        slots = (rest[idx].lower(),)
        idx += 1
    if idx + 2 >= len(rest) or rest[idx].lower() != "down" or rest[idx + 1].lower() != "by":
        raise _fail("breakdown requires 'break [this|that] down by <column>'")
    col_tok = " ".join(rest[idx + 2:])
    col, conf, runner_ups = _match_column(col_tok, schema)
    if conf < MIN_PARSE_CONFIDENCE:
        raise _fail(f"no column close to {col_tok!r}")
    args = {"dimension": col}
    cmd = IntentCommand(verb="breakdown", args=args, confidence=conf, deictic_slots=slots)
    return _with_column_alternatives(
        cmd,
        runner_ups,
        lambda c, k: IntentCommand(verb="breakdown", args={"dimension": c}, confidence=k, deictic_slots=slots),
    )


def _parse_compare(rest: List[str]) -> IntentCommand:
    vs_positions = [i for i, t in enumerate(rest) if t.lower() == "vs"]
    if not vs_positions or vs_positions[0] == 0 or vs_positions[0] == len(rest) - 1:
        raise _fail("compare requires 'compare <ref> vs <ref>'")
    split = vs_positions[0]
    left = " ".join(rest[:split])
    right = " ".join(rest[split + 1:])
    slots = tuple(t for t in (left.lower(), right.lower()) if t in DEICTIC_WORDS)
    return IntentCommand(verb="compare", args={"left": left, "right": right}, deictic_slots=slots)


def _parse_zoom(rest: List[str]) -> IntentCommand:
    if len(rest) != 1 or rest[0].lower() not in ("in", "out"):
        raise _fail("zoom requires 'in' or 'out'")
    return IntentCommand(verb="zoom", args={"direction": rest[0].lower()})


def _parse_remove(rest: List[str], schema: Sequence[str]) -> IntentCommand:
    if len(rest) < 2 or rest[0].lower() != "filter":
        raise _fail("remove requires 'remove filter <column|index>'")
    target_tok = " ".join(rest[1:])
    try:
        return IntentCommand(verb="remove", args={"index": int(target_tok)})
    except ValueError:
        pass
    col, conf, runner_ups = _match_column(target_tok, schema)
    if conf < MIN_PARSE_CONFIDENCE:
        raise _fail(f"no column close to {target_tok!r}")
    cmd = IntentCommand(verb="remove", args={"column": col}, confidence=conf)
    return _with_column_alternatives(
        cmd, runner_ups, lambda c, k: IntentCommand(verb="remove", args={"column": c}, confidence=k)
    )


def resolve_deixis(
    cmd: IntentCommand,
    selection: Sequence[int] = (),
    anchor_card: Optional[str] = None,
) -> IntentCommand:
    """Bind deictic slots to an explicit selection or anchor card."""
    if not cmd.deictic_slots:
        return cmd
    if not selection and anchor_card is None:
        raise NeedsSelectionError("deictic reference needs a selection or an anchor card")
    bound = dict(cmd.args)
    if selection:
        bound["selection"] = tuple(selection)
    if anchor_card is not None:
        bound["anchor_card"] = anchor_card
    return replace(cmd, args=bound, deictic_slots=())


def confidence_tier(cmd: IntentCommand, bounds: TierBounds = TierBounds()) -> Tier:
    """Map a command's confidence to its presentation tier."""
    if cmd.confidence >= bounds.silent:
        return Tier.SILENT
    if cmd.confidence >= bounds.inferred:
        return Tier.INFERRED
    return Tier.NEEDS_CONFIRMATION


def format(cmd: IntentCommand) -> str:
    """Canonical text for a resolved command; parse(format(cmd)) round-trips."""
    if cmd.deictic_slots:
        raise GrammarError("cannot format an unresolved deictic command")
    verb = cmd.verb
    args = cmd.args
    if verb == "filter":
        op = args["op"]
        if op == "range":
            return f"filter {args['column']} between {_format_literal(args['lo'])} and {_format_literal(args['hi'])}"
        symbol = {"eq": "=", "neq": "!=", "in": "in"}[op]
        values = ", ".join(_format_literal(v) for v in args["values"])
        return f"filter {args['column']} {symbol} {values}"
    if verb == "show":
        return f"show {args['measure']} by {args['dimension']}"
    if verb == "breakdown":
        return f"break down by {args['dimension']}"
    if verb == "compare":
        return f"compare {args['left']} vs {args['right']}"
    if verb == "zoom":
        return f"zoom {args['direction']}"
    if verb == "remove":
        if "index" in args:
            return f"remove filter {args['index']}"
        return f"remove filter {args['column']}"
    if verb == "summarize":
        return "summarize"
    if verb == "analyze":
        return f"analyze {args['topic']}"
    raise GrammarError(f"unknown verb: {verb!r}")
