"""Seeded simulations of synthetic bounded-memory agents under interface
conditions.

This is a model executor, not a human-study replacement: every paradigm
checks internal consistency of the overload model under different interface
conditions. All randomness flows from a master seed, so summaries are
byte-identical across runs.
"""

from __future__ import annotations

import csv
import io
import math
import random
import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .calculus import CalculusParams, CapacityModel, error_probability
from .cost import ModalityCostTable, OperationKind, PointingParams, fitts_time, op_time

PARADIGMS = ("ui_comparison", "anchoring", "deictic_efficiency", "change_detection")
CONDITIONS = ("chat_only", "chat_state_rail", "hybrid")

SUMMARY_NOTE = (
    "model-consistency check over synthetic bounded-memory agents; "
    "not an empirical study"
)


class HarnessError(ValueError):
    """Malformed script or paradigm configuration."""


@dataclass(frozen=True)
class AgentModel:
    wm_capacity: int = 4
    primacy_multiplier: float = 1.5
    recency_multiplier: float = 1.0
    retrieval_cost: float = 3.0
    anchor_strength: float = 0.0
    lambda_: float = 0.5

    def __post_init__(self) -> None:
        if self.wm_capacity < 1:
            raise HarnessError("wm_capacity must be at least 1")
        if not 0.0 <= self.anchor_strength <= 1.0:
            raise HarnessError("anchor_strength must lie in [0, 1]")
        if self.primacy_multiplier < 0 or self.recency_multiplier < 0:
            raise HarnessError("recall multipliers must be non-negative")


@dataclass(frozen=True)
class TaskItem:
    id: str
    kind: str = "filter"  # filter | view | hypothesis | statevar


@dataclass(frozen=True)
class TaskStep:
    op_kind: OperationKind = OperationKind.SIMPLE_FILTER
    introduced: Tuple[TaskItem, ...] = ()
    required: Tuple[str, ...] = ()


@dataclass(frozen=True)
class TaskScript:
    steps: Tuple[TaskStep, ...]

    def __post_init__(self) -> None:
        if not self.steps:
            raise HarnessError("script must have at least one step")
        seen: set = set()
        for i, step in enumerate(self.steps):
            for item in step.introduced:
                seen.add(item.id)
            for req in step.required:
                if req not in seen:
                    raise HarnessError(f"step {i}: required item {req!r} never introduced")


@dataclass(frozen=True)
class InterfaceCondition:
    """Interface condition: how many items are visible, and which modality
    operations run in."""

    name: str
    modality: str  # chat | gui

    def visible_ids(self, live: Sequence[TaskItem], last_introduced: Optional[str]) -> set:
        if self.name == "chat_only":
            return {last_introduced} if last_introduced else set()
        if self.name == "chat_state_rail":
            rail = {item.id for item in live if item.kind in ("filter", "statevar")}
            if last_introduced:
                rail.add(last_introduced)
            return rail
        return {item.id for item in live}

    def visible_count(self, live: Sequence[TaskItem]) -> int:
        if self.name == "chat_only":
            return 1
        if self.name == "chat_state_rail":
            return 1 + sum(1 for item in live if item.kind in ("filter", "statevar"))
        return len(live)


DEFAULT_CONDITIONS = (
    InterfaceCondition("chat_only", "chat"),
    InterfaceCondition("chat_state_rail", "chat"),
    InterfaceCondition("hybrid", "gui"),
)


@dataclass(frozen=True)
class TrialResult:
    total_time: float
    consistency_errors: int
    backtracks: int
    mean_overload: float
    anchor_persistence: Optional[int] = None


class _AgentMemory:
    """Bounded queue with primacy/recency weighted eviction."""

    def __init__(self, agent: AgentModel):
        self.agent = agent
        self.items: List[str] = []  # oldest first
        self.first_item: Optional[str] = None

    def _weight(self, idx: int, item_id: str) -> float:
        w = (idx + 1) * self.agent.recency_multiplier
        if item_id == self.first_item:
            w *= self.agent.primacy_multiplier
        return w

    def add(self, item_id: str) -> None:
        if self.first_item is None:
            self.first_item = item_id
        if item_id in self.items:
            self.items.remove(item_id)
        self.items.append(item_id)
        while len(self.items) > self.agent.wm_capacity:
            evict_idx = min(
                range(len(self.items)), key=lambda i: (self._weight(i, self.items[i]), i)
            )
            del self.items[evict_idx]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.items


def simulate_trial(
    task: TaskScript,
    cond: InterfaceCondition,
    agent: AgentModel = AgentModel(),
    seed: int = 0,
    table: ModalityCostTable = ModalityCostTable(),
) -> TrialResult:
    """One deterministic trial: per step, compute overload from live items and
    the condition's visibility; a required item that is neither visible nor in
    agent memory draws a consistency error with probability 1 - exp(-lambda*O),
    otherwise costs a backtrack."""
    rng = random.Random(seed)
    cap = CapacityModel(base_capacity=float(agent.wm_capacity))
    params = CalculusParams(lambda_=agent.lambda_)
    memory = _AgentMemory(agent)

    live: List[TaskItem] = []
    last_introduced: Optional[str] = None
    total_time = 0.0
    errors = 0
    backtracks = 0
    overloads: List[float] = []

    for step in task.steps:
        for item in step.introduced:
            live.append(item)
            memory.add(item.id)
            last_introduced = item.id
        m = len(live)
        v = cond.visible_count(live)
        o = max(0.0, m - v - cap.effective())
        overloads.append(o)
        visible = cond.visible_ids(live, last_introduced)

        for req in step.required:
            if req in visible or req in memory:
                continue
            if rng.random() < error_probability(o, params):
                errors += 1
            else:
                backtracks += 1
                total_time += agent.retrieval_cost
                memory.add(req)
        total_time += op_time(step.op_kind, cond.modality, table)

    mean_overload = statistics.fmean(overloads) if overloads else 0.0
    return TrialResult(
        total_time=total_time,
        consistency_errors=errors,
        backtracks=backtracks,
        mean_overload=mean_overload,
    )


# ---------------------------------------------------------------------------
# Scripts


def table_scenario_script(steps: int = 5) -> TaskScript:
    """Script holding 8 live items (4 filters, 2 views, 1 hypothesis, 1 state
    variable) across every step, reproducing the reference overload rows."""
    items = tuple(
        [TaskItem(f"f{i}", "filter") for i in range(4)]
        + [TaskItem("view0", "view"), TaskItem("view1", "view")]
        + [TaskItem("hyp0", "hypothesis"), TaskItem("sv0", "statevar")]
    )
    step_list = [TaskStep(op_kind=OperationKind.SIMPLE_FILTER, introduced=items)]
    for i in range(steps - 1):
        step_list.append(
            TaskStep(
                op_kind=OperationKind.DRILL_DOWN,
                required=(items[i % len(items)].id,),
            )
        )
    return TaskScript(steps=tuple(step_list))


def random_trap_script(rng: random.Random) -> TaskScript:
    """Randomized script that introduces many items early and later requires
    the early filters (the planted traps)."""
    n_filters = rng.randint(4, 6)
    n_other = rng.randint(2, 4)
    items = [TaskItem(f"f{i}", "filter") for i in range(n_filters)]
    kinds = ("view", "hypothesis", "statevar")
    items += [TaskItem(f"x{i}", kinds[i % 3]) for i in range(n_other)]
    steps = [TaskStep(op_kind=OperationKind.SIMPLE_FILTER, introduced=tuple(items))]
    n_steps = rng.randint(6, 10)
    op_kinds = list(OperationKind)
    for i in range(n_steps):
        trap = items[rng.randrange(n_filters)]  # always an early filter
        # Fresh distractor items keep the memory queue churning.
        distractor = TaskItem(f"d{i}", "view")
        steps.append(
            TaskStep(
                op_kind=op_kinds[rng.randrange(len(op_kinds))],
                introduced=(distractor,),
                required=(trap.id,),
            )
        )
    return TaskScript(steps=tuple(steps))


# ---------------------------------------------------------------------------
# Paradigms


@dataclass(frozen=True)
class ConditionSummary:
    condition: str
    means: Dict[str, float]
    stdevs: Dict[str, float]


@dataclass(frozen=True)
class ParadigmSummary:
    paradigm: str
    trials: int
    seed: int
    note: str
    conditions: Tuple[ConditionSummary, ...]
    paired_differences: Dict[str, float]

    def to_text(self) -> str:
        lines = [f"# {self.paradigm} ({self.trials} trials, seed {self.seed})", f"# {self.note}"]
        for cs in self.conditions:
            for metric in sorted(cs.means):
                lines.append(
                    f"{cs.condition},{metric},{cs.means[metric]!r},{cs.stdevs[metric]!r}"
                )
        for key in sorted(self.paired_differences):
            lines.append(f"diff,{key},{self.paired_differences[key]!r}")
        return "\n".join(lines) + "\n"


_METRICS = ("total_time", "consistency_errors", "backtracks", "mean_overload")


def _summarize(condition: str, results: Sequence[TrialResult]) -> ConditionSummary:
    means = {}
    stdevs = {}
    for metric in _METRICS:
        values = [getattr(r, metric) for r in results]
        means[metric] = statistics.fmean(values)
        stdevs[metric] = statistics.pstdev(values)
    persistence = [r.anchor_persistence for r in results if r.anchor_persistence is not None]
    if persistence:
        means["anchor_persistence"] = statistics.fmean(persistence)
        stdevs["anchor_persistence"] = statistics.pstdev(persistence)
    return ConditionSummary(condition=condition, means=means, stdevs=stdevs)


def _trial_seeds(master_seed: int, trials: int) -> List[int]:
    master = random.Random(master_seed)
    return [master.randrange(2**32) for _ in range(trials)]


def run_paradigm(
    paradigm: str,
    trials: int,
    seed: int,
    agent: AgentModel = AgentModel(),
    table: ModalityCostTable = ModalityCostTable(),
    pointing: PointingParams = PointingParams(),
) -> ParadigmSummary:
    """Run a paradigm for the given trial count; deterministic for fixed
    inputs. Paired differences are reported per generated task."""
    if paradigm not in PARADIGMS:
        raise HarnessError(f"unknown paradigm: {paradigm!r}")
    if trials < 1:
        raise HarnessError("trials must be at least 1")
    seeds = _trial_seeds(seed, trials)

    if paradigm == "ui_comparison":
        per_cond: Dict[str, List[TrialResult]] = {c.name: [] for c in DEFAULT_CONDITIONS}
        diffs_err: List[float] = []
        diffs_time: List[float] = []
        for s in seeds:
            script = random_trap_script(random.Random(s))
            by_name = {}
            for cond in DEFAULT_CONDITIONS:
                result = simulate_trial(script, cond, agent, seed=s, table=table)
                per_cond[cond.name].append(result)
                by_name[cond.name] = result
            diffs_err.append(
                by_name["chat_only"].consistency_errors - by_name["hybrid"].consistency_errors
            )
            diffs_time.append(by_name["chat_only"].total_time - by_name["hybrid"].total_time)
        return ParadigmSummary(
            paradigm=paradigm,
            trials=trials,
            seed=seed,
            note=SUMMARY_NOTE,
            conditions=tuple(_summarize(name, rs) for name, rs in per_cond.items()),
            paired_differences={
                "consistency_errors:chat_only-hybrid": statistics.fmean(diffs_err),
                "total_time:chat_only-hybrid": statistics.fmean(diffs_time),
            },
        )

    if paradigm == "anchoring":
        per_cond = {"chat_only": [], "side_by_side": []}
        evidence_threshold = 3.0
        for s in seeds:
            for name, pair_decrement in (("chat_only", 1.0), ("side_by_side", 2.0)):
                decrement = (1.0 - agent.anchor_strength) * pair_decrement
                level = evidence_threshold
                observations = 0
                # An entrenched anchor (decrement 0) never switches; cap the walk.
                while level > 0 and observations < 10_000:
                    level -= decrement
                    observations += 1
                per_cond[name].append(
                    TrialResult(
                        total_time=0.0,
                        consistency_errors=0,
                        backtracks=0,
                        mean_overload=0.0,
                        anchor_persistence=observations,
                    )
                )
        diff = statistics.fmean(
            a.anchor_persistence - b.anchor_persistence
            for a, b in zip(per_cond["chat_only"], per_cond["side_by_side"])
        )
        return ParadigmSummary(
            paradigm=paradigm,
            trials=trials,
            seed=seed,
            note=SUMMARY_NOTE,
            conditions=tuple(_summarize(name, rs) for name, rs in per_cond.items()),
            paired_differences={"anchor_persistence:chat_only-side_by_side": diff},
        )

    if paradigm == "deictic_efficiency":
        per_cond = {"describe_the_point": [], "point_and_ask": []}
        ratios: List[float] = []
        ask_time = 2.0  # short spoken query accompanying the point
        for s in seeds:
            rng = random.Random(s)
            distance = rng.uniform(200.0, 800.0)
            width = rng.uniform(16.0, 64.0)
            describe = op_time(OperationKind.MULTI_SELECT, "chat", table) + rng.uniform(0.0, 2.0)
            point = fitts_time(pointing, distance, width) + ask_time
            per_cond["describe_the_point"].append(
                TrialResult(total_time=describe, consistency_errors=0, backtracks=0, mean_overload=0.0)
            )
            per_cond["point_and_ask"].append(
                TrialResult(total_time=point, consistency_errors=0, backtracks=0, mean_overload=0.0)
            )
            ratios.append(describe / point)
        return ParadigmSummary(
            paradigm=paradigm,
            trials=trials,
            seed=seed,
            note=SUMMARY_NOTE,
            conditions=tuple(_summarize(name, rs) for name, rs in per_cond.items()),
            paired_differences={"time_ratio:describe/point": statistics.fmean(ratios)},
        )

    # change_detection: the difference between two near-identical tables is
    # one extra item; chat needs a memory round-trip to compare, side-by-side
    # does not.
    per_cond = {"chat_transcript": [], "side_by_side": []}
    params = CalculusParams(lambda_=agent.lambda_)
    comparisons = 10
    for s in seeds:
        rng = random.Random(s)
        miss_p = error_probability(1.0, params)
        missed = sum(1 for _ in range(comparisons) if rng.random() < miss_p)
        per_cond["chat_transcript"].append(
            TrialResult(
                total_time=comparisons * op_time(OperationKind.COMPARE_VIEWS, "chat", table),
                consistency_errors=missed,
                backtracks=comparisons - missed,
                mean_overload=1.0,
            )
        )
        per_cond["side_by_side"].append(
            TrialResult(
                total_time=comparisons * op_time(OperationKind.COMPARE_VIEWS, "gui", table),
                consistency_errors=0,
                backtracks=0,
                mean_overload=0.0,
            )
        )
    diff = statistics.fmean(
        a.consistency_errors - b.consistency_errors
        for a, b in zip(per_cond["chat_transcript"], per_cond["side_by_side"])
    )
    return ParadigmSummary(
        paradigm="change_detection",
        trials=trials,
        seed=seed,
        note=SUMMARY_NOTE,
        conditions=tuple(_summarize(name, rs) for name, rs in per_cond.items()),
        paired_differences={"missed_differences:chat-side_by_side": diff},
    )


# ---------------------------------------------------------------------------
# Metrics export

EXPORT_COLUMNS = (
    "trial",
    "condition",
    "seed",
    "total_time",
    "consistency_errors",
    "backtracks",
    "mean_overload",
    "anchor_persistence",
)


def export_metrics(results: Sequence[Tuple[str, int, TrialResult]]) -> str:
    """CSV export, one row per (condition, seed, result) in input order."""
    if not results:
        raise HarnessError("no trial results to export")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EXPORT_COLUMNS)
    for i, (condition, seed, r) in enumerate(results):
        writer.writerow(
            [
                i,
                condition,
                seed,
                repr(r.total_time),
                r.consistency_errors,
                r.backtracks,
                repr(r.mean_overload),
                "" if r.anchor_persistence is None else r.anchor_persistence,
            ]
        )
    return buf.getvalue()
