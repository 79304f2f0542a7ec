"""Rank classification, LCS-based generation scoring, and expert rankings.

Classification tasks are scored by rank classification: the answer choice
whose tokens get the highest summed log-likelihood wins, ties to the lowest
index. Generative tasks are scored with the F1 of the longest common
subsequence between greedy-decoded and reference token ids (candidate decode
budget: twice the reference length). An EvalReport carries per-task values
and their mean; rank_experts sorts experts by mean, descending, ties broken
by expert id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .tasks import TaskInstance, TaskSet


class NotClassificationError(ValueError):
    """Rank classification was asked for a generative instance or task."""


class EmptyReferenceError(ValueError):
    """LCS scoring needs a nonempty reference sequence."""


ChoiceScorer = Callable[[TaskInstance, str], float]


def rank_classify(scorer: ChoiceScorer, instance: TaskInstance) -> int:
    """Index of the highest-scoring answer choice; ties pick the lowest index."""
    if not instance.answer_choices:
        raise NotClassificationError(
            f"instance {instance.instance_id!r} has no answer choices"
        )
    best_idx = 0
    best = None
    for idx, choice in enumerate(instance.answer_choices):
        value = float(scorer(instance, choice))
        if best is None or value > best:
            best, best_idx = value, idx
    return best_idx


def accuracy(scorer: ChoiceScorer, taskset: TaskSet) -> float:
    """Fraction of instances whose ranked choice is the target's index."""
    if taskset.kind != "classification":
        raise NotClassificationError(f"task {taskset.name!r} is generative")
    hits = 0
    for instance in taskset:
        target_idx = instance.answer_choices.index(instance.target)
        if rank_classify(scorer, instance) == target_idx:
            hits += 1
    return hits / len(taskset)


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Longest common subsequence length via the classic DP recurrence."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence, reference: Sequence) -> float:
    """LCS F1 between two token sequences, in [0, 1]."""
    if len(reference) == 0:
        raise EmptyReferenceError("reference sequence is empty")
    if len(candidate) == 0:
        return 0.0
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class EvalReport:
    """Per-task metric values for one expert."""

    expert_id: str
    metric: str
    per_task: dict[str, float]
    mean: float
    seed: int = 0

    def __post_init__(self):
        if not self.per_task:
            raise ValueError("report needs at least one task")
        recomputed = sum(self.per_task.values()) / len(self.per_task)
        if abs(recomputed - self.mean) > 1e-9:
            raise ValueError(
                f"mean {self.mean} disagrees with per-task values ({recomputed})"
            )

    def to_record(self) -> dict:
        return {
            "expert": self.expert_id,
            "metric": self.metric,
            "per_task": dict(self.per_task),
            "mean": self.mean,
            "seed": self.seed,
        }


def make_report(expert_id: str, metric: str, per_task: Mapping[str, float],
                seed: int = 0) -> EvalReport:
    values = dict(per_task)
    return EvalReport(
        expert_id=expert_id,
        metric=metric,
        per_task=values,
        mean=sum(values.values()) / len(values),
        seed=seed,
    )


def task_metric(expert, taskset: TaskSet) -> float:
    """Dispatch on task kind: accuracy, or mean LCS F1 over decoded instances.

    ``expert`` follows the scorer protocol: ``score(instance, text)`` for
    classification; ``reference_ids(instance)`` and
    ``decode_ids(instance, max_len)`` for generative tasks.
    """
    if taskset.kind == "classification":
        return accuracy(expert.score, taskset)
    total = 0.0
    for instance in taskset:
        reference = expert.reference_ids(instance)
        candidate = expert.decode_ids(instance, max_len=2 * len(reference))
        total += rouge_l(candidate, reference)
    return total / len(taskset)


def metric_name(kind: str) -> str:
    return "accuracy" if kind == "classification" else "rouge_l"


def evaluate(expert, taskset: TaskSet, expert_id: str | None = None,
             seed: int = 0) -> EvalReport:
    """Score one expert on one task; deterministic for a fixed seed."""
    eid = expert_id if expert_id is not None else getattr(expert, "expert_id", "expert")
    return make_report(
        eid, metric_name(taskset.kind), {taskset.name: task_metric(expert, taskset)},
        seed=seed,
    )


def evaluate_many(expert, tasksets: Sequence[TaskSet], expert_id: str | None = None,
                  seed: int = 0) -> EvalReport:
    """One report covering several tasks; metric is 'mixed' when kinds differ."""
    if not tasksets:
        raise ValueError("need at least one taskset")
    kinds = {ts.kind for ts in tasksets}
    metric = metric_name(kinds.pop()) if len(kinds) == 1 else "mixed"
    per_task = {ts.name: task_metric(expert, ts) for ts in tasksets}
    return make_report(expert_id if expert_id is not None
                       else getattr(expert, "expert_id", "expert"),
                       metric, per_task, seed=seed)


def rank_experts(experts: Mapping[str, object], tasksets: Sequence[TaskSet],
                 seed: int = 0) -> list[EvalReport]:
    """Evaluate every expert on every task, sort by mean descending.

    The sort is stable with ties broken by expert id, so rankings are
    reproducible.
    """
    if not experts or not tasksets:
        raise ValueError("need at least one expert and one taskset")
    reports = [
        evaluate_many(expert, tasksets, expert_id=eid, seed=seed)
        for eid, expert in experts.items()
    ]
    return sorted(reports, key=lambda r: (-r.mean, r.expert_id))


def render_ranking_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text ranking with expert, mean, and metric columns."""
    rows = [("expert", "mean", "metric")]
    rows += [(r.expert_id, f"{r.mean:.4f}", r.metric) for r in reports]
    widths = [max(len(row[col]) for row in rows) for col in range(3)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[col]) for col, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * widths[col] for col in range(3)))
    return "\n".join(lines)
