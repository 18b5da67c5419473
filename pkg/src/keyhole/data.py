"""Typed columnar data engine.

CSV ingestion with per-column type inference, filter/group/aggregate queries,
z-score anomaly markers, level-of-detail (semantic zoom) representations,
selection characterization, and column self-profiles. Datasets are immutable
after ingest; queries are read-only.
"""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from datetime import datetime, date, timedelta
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

Value = Union[int, float, str, bool, datetime, None]

COLUMN_TYPES = ("number", "string", "timestamp", "boolean")
AGGREGATES = ("count", "sum", "mean", "min", "max")
FILTER_OPS = ("eq", "neq", "in", "range")
TIME_BUCKETS = ("day", "week", "month")

FLAT_SLOPE_EPSILON = 1e-9


class DataError(ValueError):
    """Base error for the data engine."""


class ParseError(DataError):
    """Malformed CSV input; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(DataError):
    """Unknown or duplicate column, or a type-invalid reference."""


class QueryError(DataError):
    """Invalid QuerySpec against a dataset."""


@dataclass(frozen=True)
class FilterSpec:
    """A single predicate over one column."""

    column: str
    op: str
    values: Tuple[Value, ...] = ()
    lo: Value = None
    hi: Value = None

    def __post_init__(self) -> None:
        if self.op not in FILTER_OPS:
            raise DataError(f"unknown filter op: {self.op!r}")
        if self.op == "in" and not self.values:
            raise DataError("'in' filter requires at least one value")
        if self.op in ("eq", "neq") and len(self.values) != 1:
            raise DataError(f"{self.op!r} filter requires exactly one value")
        if self.op == "range":
            if self.lo is None or self.hi is None:
                raise DataError("range filter requires lo and hi")
            if not _comparable(self.lo, self.hi) or self.lo > self.hi:  # type: ignore[operator]
                raise DataError("range filter requires comparable lo <= hi")

    def matches(self, value: Value) -> bool:
        if value is None:
            return False
        if self.op == "eq":
            return value == self.values[0]
        if self.op == "neq":
            return value != self.values[0]
        if self.op == "in":
            return value in self.values
        return _comparable(self.lo, value) and self.lo <= value <= self.hi  # type: ignore[operator]

    def to_dict(self) -> dict:
        return {
            "column": self.column,
            "op": self.op,
            "values": [_value_to_plain(v) for v in self.values],
            "lo": _value_to_plain(self.lo),
            "hi": _value_to_plain(self.hi),
        }

    @staticmethod
    def from_dict(d: dict) -> "FilterSpec":
        return FilterSpec(
            column=d["column"],
            op=d["op"],
            values=tuple(_plain_to_value(v) for v in d.get("values", [])),
            lo=_plain_to_value(d.get("lo")),
            hi=_plain_to_value(d.get("hi")),
        )


def _comparable(a: Value, b: Value) -> bool:
    try:
        a <= b  # type: ignore[operator]
        return True
    except TypeError:
        return False


def _value_to_plain(v: Value):
    if isinstance(v, datetime):
        return {"$ts": v.isoformat()}
    return v


def _plain_to_value(v) -> Value:
    if isinstance(v, dict) and "$ts" in v:
        return datetime.fromisoformat(v["$ts"])
    return v


@dataclass(frozen=True)
class Dataset:
    schema: Tuple[Tuple[str, str], ...]
    columns: Dict[str, Tuple[Value, ...]]
    row_count: int

    def column_names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.schema)

    def column_type(self, name: str) -> str:
        for col, kind in self.schema:
            if col == name:
                return kind
        raise SchemaError(f"unknown column: {name!r}")

    def column(self, name: str) -> Tuple[Value, ...]:
        if name not in self.columns:
            raise SchemaError(f"unknown column: {name!r}")
        return self.columns[name]

    def row(self, i: int) -> Tuple[Value, ...]:
        return tuple(self.columns[name][i] for name, _ in self.schema)


@dataclass(frozen=True)
class QuerySpec:
    filters: Tuple[FilterSpec, ...] = ()
    group_by: Tuple[str, ...] = ()
    aggregate: str = "count"
    target: Optional[str] = None
    time_bucket: Optional[str] = None

    def __post_init__(self) -> None:
        if self.aggregate not in AGGREGATES:
            raise QueryError(f"unknown aggregate: {self.aggregate!r}")
        if self.aggregate != "count" and self.target is None:
            raise QueryError(f"aggregate {self.aggregate!r} requires a target column")
        if self.time_bucket is not None and self.time_bucket not in TIME_BUCKETS:
            raise QueryError(f"unknown time bucket: {self.time_bucket!r}")

    def label(self) -> str:
        return f"{self.aggregate}({self.target})" if self.target else "count"

    def to_dict(self) -> dict:
        return {
            "filters": [f.to_dict() for f in self.filters],
            "group_by": list(self.group_by),
            "aggregate": self.aggregate,
            "target": self.target,
            "time_bucket": self.time_bucket,
        }

    @staticmethod
    def from_dict(d: dict) -> "QuerySpec":
        return QuerySpec(
            filters=tuple(FilterSpec.from_dict(f) for f in d.get("filters", [])),
            group_by=tuple(d.get("group_by", ())),
            aggregate=d.get("aggregate", "count"),
            target=d.get("target"),
            time_bucket=d.get("time_bucket"),
        )


@dataclass(frozen=True)
class ResultTable:
    columns: Tuple[str, ...]
    rows: Tuple[Tuple[Value, ...], ...]
    query: Optional[QuerySpec] = None
    source_hash: Optional[str] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow(["" if v is None else _cell_text(v) for v in row])
        return buf.getvalue()


def _cell_text(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, datetime):
        return v.isoformat()
    return str(v)


@dataclass(frozen=True)
class AnomalyMarker:
    target: Union[int, str]
    score: float
    kind: str  # spike | dip | missingness


# ---------------------------------------------------------------------------
# Ingestion


def _parse_number(text: str) -> Union[int, float]:
    try:
        return int(text)
    except ValueError:
        pass
    lowered = text.lower()
    if lowered in ("nan", "inf", "-inf", "infinity", "-infinity", "+inf"):
        raise ValueError(text)
    return float(text)


def _parse_timestamp(text: str) -> datetime:
    # Subset of ISO 8601: date or date[ T]time, no timezone suffix.
    if len(text) < 10 or text[4] != "-" or text[7] != "-":
        raise ValueError(text)
    return datetime.fromisoformat(text)


_BOOL_LITERALS = {"true": True, "false": False}


def _parse_boolean(text: str) -> bool:
    key = text.strip().lower()
    if key not in _BOOL_LITERALS:
        raise ValueError(text)
    return _BOOL_LITERALS[key]


_INFERENCE_ORDER = (
    ("number", _parse_number),
    ("timestamp", _parse_timestamp),
    ("boolean", _parse_boolean),
)


def _infer_column(cells: Sequence[str]) -> Tuple[str, List[Value]]:
    present = [(i, c) for i, c in enumerate(cells) if c != ""]
    values: List[Value] = [None] * len(cells)
    for kind, parser in _INFERENCE_ORDER:
        try:
            for i, text in present:
                values[i] = parser(text)
            return kind, values
        except ValueError:
            continue
    for i, text in present:
        values[i] = text
    return "string", values


def ingest_csv(source: Union[str, bytes, io.TextIOBase]) -> Dataset:
    """Parse CSV (header row, comma delimiter, double-quote escaping) into a
    typed Dataset. Types are inferred per column: number, then timestamp,
    then boolean literals, else string; empty cells become missing."""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input, expected a header row", line=1)
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise SchemaError(f"duplicate header names: {dupes}")
    if any(h == "" for h in header):
        raise SchemaError("empty header name")

    raw_rows: List[List[str]] = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, got {len(row)}", line=line_no
            )
        raw_rows.append(row)

    schema: List[Tuple[str, str]] = []
    columns: Dict[str, Tuple[Value, ...]] = {}
    for idx, name in enumerate(header):
        kind, values = _infer_column([r[idx] for r in raw_rows])
        schema.append((name, kind))
        columns[name] = tuple(values)
    return Dataset(schema=tuple(schema), columns=columns, row_count=len(raw_rows))


# ---------------------------------------------------------------------------
# Querying


def validate_filter(ds: Dataset, f: FilterSpec) -> None:
    kind = ds.column_type(f.column)  # raises SchemaError on unknown column
    expected = {"number": (int, float), "string": (str,), "boolean": (bool,), "timestamp": (datetime,)}[kind]
    literals = list(f.values) + ([f.lo, f.hi] if f.op == "range" else [])
    for lit in literals:
        if lit is None:
            continue
        if kind == "number" and isinstance(lit, bool):
            raise QueryError(f"boolean literal for numeric column {f.column!r}")
        if not isinstance(lit, expected):
            raise QueryError(
                f"filter literal {lit!r} does not match column {f.column!r} of type {kind}"
            )


def matching_rows(ds: Dataset, filters: Sequence[FilterSpec]) -> List[int]:
    for f in filters:
        validate_filter(ds, f)
    out = []
    for i in range(ds.row_count):
        if all(f.matches(ds.columns[f.column][i]) for f in filters):
            out.append(i)
    return out


def _bucket(value: datetime, bucket: str) -> datetime:
    if bucket == "day":
        return datetime(value.year, value.month, value.day)
    if bucket == "week":
        day = datetime(value.year, value.month, value.day)
        return day - timedelta(days=day.weekday())
    return datetime(value.year, value.month, 1)


def _group_key_value(ds: Dataset, q: QuerySpec, col: str, i: int) -> Value:
    v = ds.columns[col][i]
    if v is not None and q.time_bucket and ds.column_type(col) == "timestamp":
        return _bucket(v, q.time_bucket)
    return v


def _sort_key(key: Tuple[Value, ...]):
    return tuple((v is None, v) for v in key)


def _aggregate(values: List[Value], how: str) -> Value:
    present = [v for v in values if v is not None]
    if how == "count":
        return len(present)
    if not present:
        return None
    if how == "sum":
        return sum(present)
    if how == "mean":
        return sum(present) / len(present)
    if how == "min":
        return min(present)
    if how == "max":
        return max(present)
    raise QueryError(f"unknown aggregate: {how!r}")


def run_query(ds: Dataset, q: QuerySpec) -> ResultTable:
    """Filter, group, and aggregate. Missing values are excluded from
    aggregates; count counts rows where the counted column is present (all
    filtered rows when no target column is given). Group keys sort ascending,
    missing keys last."""
    if q.target is not None:
        kind = ds.column_type(q.target)
        if q.aggregate != "count" and kind != "number":
            raise QueryError(f"aggregate {q.aggregate!r} requires a numeric target")
    for col in q.group_by:
        ds.column_type(col)

    rows = matching_rows(ds, q.filters)
    label = q.label()

    def target_values(indices: Sequence[int]) -> List[Value]:
        if q.target is None:
            return [True] * len(indices)  # count of rows
        col = ds.columns[q.target]
        return [col[i] for i in indices]

    if not q.group_by:
        value = _aggregate(target_values(rows), q.aggregate)
        return ResultTable(columns=(label,), rows=((value,),), query=q)

    groups: Dict[Tuple[Value, ...], List[int]] = {}
    for i in rows:
        key = tuple(_group_key_value(ds, q, col, i) for col in q.group_by)
        groups.setdefault(key, []).append(i)
    out_rows = []
    for key in sorted(groups, key=_sort_key):
        out_rows.append(key + (_aggregate(target_values(groups[key]), q.aggregate),))
    return ResultTable(columns=q.group_by + (label,), rows=tuple(out_rows), query=q)


# ---------------------------------------------------------------------------
# Anomaly markers


def detect_anomalies(series: Sequence[float], threshold: float) -> List[AnomalyMarker]:
    """Marker at index i iff |z_i| >= threshold using the population stdev.
    A zero-variance series yields no markers."""
    if len(series) < 3:
        raise DataError("anomaly detection requires at least 3 points")
    if threshold <= 0:
        raise DataError("threshold must be positive")
    mean = statistics.fmean(series)
    stdev = statistics.pstdev(series)
    if stdev == 0:
        return []
    markers = []
    for i, x in enumerate(series):
        z = (x - mean) / stdev
        if abs(z) >= threshold:
            markers.append(AnomalyMarker(target=i, score=z, kind="spike" if z > 0 else "dip"))
    return markers


# ---------------------------------------------------------------------------
# Semantic zoom


@dataclass(frozen=True)
class ZoomView:
    """One complete, self-contained representation at a zoom level.

    Level 2 carries raw matching rows, level 1 an aggregate table plus a
    chart spec, level 0 a one-sentence summary."""

    level: int
    table: Optional[ResultTable] = None
    chart: Optional[dict] = None
    sentence: Optional[str] = None


def _slope_direction(values: Sequence[float]) -> str:
    if len(values) < 2:
        return "flat"
    xs = list(range(len(values)))
    if len(set(values)) == 1:
        return "flat"
    slope = statistics.linear_regression(xs, values).slope
    scale = max(abs(v) for v in values) or 1.0
    if abs(slope) < FLAT_SLOPE_EPSILON * scale:
        return "flat"
    return "rising" if slope > 0 else "falling"


def summarize_result(result: ResultTable) -> str:
    """Template sentence: '<measure> is <direction> over <range>; extremum
    <value> at <key>'."""
    measure = result.columns[-1]
    values = [r[-1] for r in result.rows if r[-1] is not None]
    if not values:
        return f"{measure} has no data"
    numeric = [float(v) for v in values if isinstance(v, (int, float)) and not isinstance(v, bool)]
    if len(result.rows) == 1 and len(result.columns) == 1:
        return f"{measure} is {values[0]} overall"
    direction = _slope_direction(numeric) if numeric else "flat"
    keys = [r[:-1] for r in result.rows]
    lo_key = _key_text(keys[0]) if keys else ""
    hi_key = _key_text(keys[-1]) if keys else ""
    best_i = max(range(len(result.rows)), key=lambda i: float("-inf") if result.rows[i][-1] is None else result.rows[i][-1])
    best_key = _key_text(result.rows[best_i][:-1])
    best_val = result.rows[best_i][-1]
    return (
        f"{measure} is {direction} over {lo_key}..{hi_key}; "
        f"extremum {best_val} at {best_key}"
    )


def _key_text(key: Tuple[Value, ...]) -> str:
    return "/".join(_cell_text(k) if k is not None else "?" for k in key)


def zoom_levels(ds: Dataset, q: QuerySpec, level: int) -> ZoomView:
    """Representation of a query at a zoom level: 2 = raw matching rows,
    1 = aggregate table + chart spec, 0 = summary sentence."""
    if level not in (0, 1, 2):
        raise DataError(f"zoom level must be 0, 1, or 2, got {level!r}")
    if level == 2:
        rows = matching_rows(ds, q.filters)
        return ZoomView(
            level=2,
            table=ResultTable(
                columns=ds.column_names(),
                rows=tuple(ds.row(i) for i in rows),
                query=q,
            ),
        )
    result = run_query(ds, q)
    if level == 1:
        chart = {
            "type": "line" if q.time_bucket else "bar",
            "x": list(q.group_by),
            "y": result.columns[-1],
        }
        return ZoomView(level=1, table=result, chart=chart)
    return ZoomView(level=0, sentence=summarize_result(result))


# ---------------------------------------------------------------------------
# Selection characterization


@dataclass(frozen=True)
class FeatureScore:
    column: str
    score: float
    detail: str


@dataclass(frozen=True)
class SelectionReport:
    features: Tuple[FeatureScore, ...]
    low_support: bool = False
    note: str = ""


def _numeric_view(values: Sequence[Value], kind: str) -> List[float]:
    out = []
    for v in values:
        if v is None:
            continue
        out.append(v.timestamp() if isinstance(v, datetime) else float(v))
    return out


def characterize_selection(ds: Dataset, row_ids: Iterable[int]) -> SelectionReport:
    """Rank columns by how much the selected rows differ from the rest.

    Numeric and timestamp columns use the standardized mean difference;
    categorical columns use the dominant-value share difference. Ties break
    by schema order."""
    ids = sorted(set(row_ids))
    if not ids:
        raise DataError("selection must be non-empty")
    if ids[0] < 0 or ids[-1] >= ds.row_count:
        raise DataError("selection contains out-of-range row ids")
    selected = set(ids)
    complement = [i for i in range(ds.row_count) if i not in selected]
    if not complement:
        return SelectionReport(features=(), note="selection covers all rows; no complement to compare")

    features: List[Tuple[int, FeatureScore]] = []
    for order, (name, kind) in enumerate(ds.schema):
        col = ds.columns[name]
        sel_vals = [col[i] for i in ids]
        comp_vals = [col[i] for i in complement]
        if kind in ("number", "timestamp"):
            sel_num = _numeric_view(sel_vals, kind)
            comp_num = _numeric_view(comp_vals, kind)
            all_num = sel_num + comp_num
            if not sel_num or not comp_num:
                continue
            spread = statistics.pstdev(all_num) if len(all_num) > 1 else 0.0
            if spread == 0:
                score = 0.0
            else:
                score = abs(statistics.fmean(sel_num) - statistics.fmean(comp_num)) / spread
            detail = f"selection mean {statistics.fmean(sel_num):.4g} vs {statistics.fmean(comp_num):.4g}"
        else:
            sel_present = [v for v in sel_vals if v is not None]
            if not sel_present:
                continue
            counts: Dict[Value, int] = {}
            for v in sel_present:
                counts[v] = counts.get(v, 0) + 1
            dominant = max(counts, key=lambda k: (counts[k], str(k)))
            sel_share = counts[dominant] / len(sel_present)
            comp_present = [v for v in comp_vals if v is not None]
            comp_share = (
                sum(1 for v in comp_present if v == dominant) / len(comp_present)
                if comp_present
                else 0.0
            )
            score = abs(sel_share - comp_share)
            detail = f"{_cell_text(dominant)}: {sel_share:.0%} of selection vs {comp_share:.0%} of rest"
        features.append((order, FeatureScore(column=name, score=score, detail=detail)))

    features.sort(key=lambda pair: (-pair[1].score, pair[0]))
    return SelectionReport(
        features=tuple(f for _, f in features),
        low_support=len(ids) < 2,
    )


# ---------------------------------------------------------------------------
# Column profiles


@dataclass(frozen=True)
class ColumnProfile:
    name: str
    kind: str
    missing_rate: float
    distinct_count: int
    minimum: Value = None
    maximum: Value = None
    top_values: Tuple[Tuple[Value, int], ...] = ()
    missing_by_group: Tuple[Tuple[Value, float], ...] = ()

    def describe(self) -> str:
        parts = [f"{self.name}: {self.missing_rate:.0%} missing, {self.distinct_count} distinct"]
        if self.minimum is not None:
            parts.append(f"range {_cell_text(self.minimum)}..{_cell_text(self.maximum)}")
        if self.missing_by_group:
            group, share = self.missing_by_group[0]
            parts.append(f"missing concentrated in {_cell_text(group)} ({share:.0%})")
        return "; ".join(parts)


def column_profile(ds: Dataset, column: str, group_by: Optional[str] = None) -> ColumnProfile:
    """Self-profile of one column; optionally reports where its missing cells
    concentrate across the groups of another column."""
    kind = ds.column_type(column)
    values = ds.columns[column]
    present = [v for v in values if v is not None]
    missing_count = ds.row_count - len(present)
    missing_rate = missing_count / ds.row_count if ds.row_count else 0.0
    distinct = len(set(present))
    minimum = maximum = None
    top: Tuple[Tuple[Value, int], ...] = ()
    if kind in ("number", "timestamp") and present:
        minimum, maximum = min(present), max(present)
    else:
        counts: Dict[Value, int] = {}
        for v in present:
            counts[v] = counts.get(v, 0) + 1
        top = tuple(sorted(counts.items(), key=lambda kv: (-kv[1], _cell_text(kv[0])))[:5])

    missing_by_group: Tuple[Tuple[Value, float], ...] = ()
    if group_by is not None and missing_count > 0:
        ds.column_type(group_by)
        group_missing: Dict[Value, int] = {}
        for i in range(ds.row_count):
            if values[i] is None:
                key = ds.columns[group_by][i]
                group_missing[key] = group_missing.get(key, 0) + 1
        missing_by_group = tuple(
            sorted(
                ((g, n / missing_count) for g, n in group_missing.items()),
                key=lambda kv: (-kv[1], _cell_text(kv[0]) if kv[0] is not None else ""),
            )
        )
    return ColumnProfile(
        name=column,
        kind=kind,
        missing_rate=missing_rate,
        distinct_count=distinct,
        minimum=minimum,
        maximum=maximum,
        top_values=top,
        missing_by_group=missing_by_group,
    )
