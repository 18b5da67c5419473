import random

import pytest

from keyhole.data import Dataset, FilterSpec, QuerySpec, ingest_csv

SALES_CSV = """region,product,revenue,churned,signup
EU,alpha,100,true,2024-01-05
EU,beta,200,false,2024-01-12
US,alpha,150,false,2024-02-02
US,beta,,true,2024-02-15
EU,alpha,120,false,2024-03-01
APAC,beta,300,true,2024-03-20
US,alpha,90,false,2024-04-02
EU,beta,210,true,2024-04-18
APAC,alpha,80,false,2024-05-06
EU,alpha,500,true,2024-05-21
"""


@pytest.fixture
def sales() -> Dataset:
    return ingest_csv(SALES_CSV)


def random_dataset(rng: random.Random, max_rows: int = 1000, max_cols: int = 6) -> Dataset:
    """Small random dataset for oracle-equivalence checks."""
    n_rows = rng.randint(1, max_rows)
    n_cols = rng.randint(1, max_cols)
    header = []
    cols = []
    for c in range(n_cols):
        kind = rng.choice(["int", "float", "cat"])
        header.append(f"c{c}")
        if kind == "int":
            cols.append([rng.randint(-50, 50) if rng.random() > 0.1 else "" for _ in range(n_rows)])
        elif kind == "float":
            cols.append(
                [round(rng.uniform(-100, 100), 3) if rng.random() > 0.1 else "" for _ in range(n_rows)]
            )
        else:
            cols.append(
                [rng.choice(["a", "b", "c", "d"]) if rng.random() > 0.1 else "" for _ in range(n_rows)]
            )
    lines = [",".join(header)]
    for i in range(n_rows):
        lines.append(",".join(str(col[i]) for col in cols))
    return ingest_csv("\n".join(lines) + "\n")


def random_query(rng: random.Random, ds: Dataset) -> QuerySpec:
    numeric = [n for n, k in ds.schema if k == "number"]
    strings = [n for n, k in ds.schema if k == "string"]
    filters = []
    for _ in range(rng.randint(0, 2)):
        if strings and rng.random() < 0.5:
            col = rng.choice(strings)
            op = rng.choice(["eq", "neq", "in"])
            if op == "in":
                values = tuple(rng.sample(["a", "b", "c", "d"], rng.randint(1, 3)))
            else:
                values = (rng.choice(["a", "b", "c", "d"]),)
            filters.append(FilterSpec(column=col, op=op, values=values))
        elif numeric:
            col = rng.choice(numeric)
            lo = rng.uniform(-60, 0)
            hi = lo + rng.uniform(0, 80)
            filters.append(FilterSpec(column=col, op="range", lo=lo, hi=hi))
    group_by = tuple(rng.sample(strings, 1)) if strings and rng.random() < 0.6 else ()
    if numeric and rng.random() < 0.8:
        agg = rng.choice(["sum", "mean", "min", "max", "count"])
        target = rng.choice(numeric)
    else:
        agg, target = "count", None
    return QuerySpec(filters=tuple(filters), group_by=group_by, aggregate=agg, target=target)


def oracle_query(ds: Dataset, q: QuerySpec):
    """Independent naive row-scan: returns {group_key: aggregate} (key () when
    ungrouped)."""
    rows = []
    for i in range(ds.row_count):
        ok = True
        for f in q.filters:
            v = ds.columns[f.column][i]
            if v is None:
                ok = False
            elif f.op == "eq":
                ok = v == f.values[0]
            elif f.op == "neq":
                ok = v != f.values[0]
            elif f.op == "in":
                ok = v in f.values
            else:
                ok = f.lo <= v <= f.hi
            if not ok:
                break
        if ok:
            rows.append(i)
    groups = {}
    for i in rows:
        key = tuple(ds.columns[c][i] for c in q.group_by)
        groups.setdefault(key, []).append(i)
    out = {}
    for key, members in groups.items():
        if q.target is None:
            out[key] = len(members)
            continue
        vals = [ds.columns[q.target][i] for i in members if ds.columns[q.target][i] is not None]
        if q.aggregate == "count":
            out[key] = len(vals)
        elif not vals:
            out[key] = None
        elif q.aggregate == "sum":
            out[key] = sum(vals)
        elif q.aggregate == "mean":
            out[key] = sum(vals) / len(vals)
        elif q.aggregate == "min":
            out[key] = min(vals)
        else:
            out[key] = max(vals)
    if not q.group_by and not out:
        out[()] = 0 if q.aggregate == "count" else None
    return out


def assert_query_matches_oracle(ds: Dataset, q: QuerySpec):
    from keyhole.data import run_query

    result = run_query(ds, q)
    expected = oracle_query(ds, q)
    got = {row[:-1] if q.group_by else (): row[-1] for row in result.rows}
    assert set(got) == set(expected)
    for key, want in expected.items():
        have = got[key]
        if want is None or have is None:
            assert want == have
        elif q.aggregate == "mean":
            assert have == pytest.approx(want, rel=1e-9)
        else:
            assert have == want
