"""Validation-driven search over merge weights and two-expert composition.

The merged model is base-plus-weighted-task-vectors; the weights (lambdas)
are picked by scoring candidate merges on a held-out validation task. Up to
two task vectors the grid is searched exhaustively; beyond that, coordinate
ascent cycles through the terms for two sweeps, with the single-expert
corners, the uniform point, and the all-ones point always evaluated first so
the returned optimum provably dominates those baselines.

Every distinct evaluated point is logged once, in evaluation order; ties on
score resolve to the earliest point, which makes results and logs
byte-reproducible.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .params import MergeTerm, ParameterSet, SchemaMismatchError, TaskVector, merge
from .tasks import TaskSet

# Spans "drop the expert" (0) through "double strength" (2); always contains
# the corners and, for two terms, the uniform point.
DEFAULT_LAMBDA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)

ASCENT_SWEEPS = 2

Evaluator = Callable[[ParameterSet, TaskSet], float]


class EmptyTausError(ValueError):
    """Search needs at least one task vector."""


class EmptyValidationError(ValueError):
    """Search needs a nonempty validation task."""


@dataclass(frozen=True)
class SearchPoint:
    """One evaluated lambda assignment."""

    lambdas: tuple[float, ...]
    score: float

    def to_record(self) -> dict:
        return {"lambdas": [float(v) for v in self.lambdas],
                "score": float(self.score)}


@dataclass(frozen=True)
class MergeSearchResult:
    lambdas: tuple[float, ...]
    score: float
    evaluated: int
    log: tuple[SearchPoint, ...]

    def __post_init__(self):
        if self.evaluated != len(self.log):
            raise ValueError("evaluated count must match the log length")
        if any(point.score > self.score for point in self.log):
            raise ValueError("result score must dominate every logged point")
        if (self.lambdas, self.score) not in [
            (p.lambdas, p.score) for p in self.log
        ]:
            raise ValueError("result must be one of the logged points")


def augment_grid(grid: Sequence[float], n_terms: int) -> tuple[float, ...]:
    """Append any missing anchors (0, 1, 1/N) so corner and uniform merges
    are always evaluated; earlier positions win ties, so anchors appended
    here carry the lowest tie priority."""
    out = [float(v) for v in grid]
    if not out:
        raise ValueError("lambda grid must be nonempty")
    if any(not math.isfinite(v) for v in out):
        raise ValueError("lambda grid values must be finite")
    for anchor in (0.0, 1.0, 1.0 / n_terms):
        if anchor not in out:
            out.append(anchor)
    seen: dict[float, None] = {}
    for v in out:
        seen.setdefault(v, None)
    return tuple(seen)


def search_lambdas(
    theta_pre: ParameterSet,
    taus: Sequence[TaskVector],
    validation: TaskSet,
    evaluator: Evaluator,
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
) -> MergeSearchResult:
    """Grid-search merge weights; exhaustive for N <= 2, coordinate ascent
    beyond. Returns the first-evaluated point with the maximal score."""
    taus = list(taus)
    if not taus:
        raise EmptyTausError("need at least one task vector")
    if validation is None or len(validation) == 0:
        raise EmptyValidationError("validation task must be nonempty")
    for tau in taus:
        if tau.schema() != theta_pre.schema():
            raise SchemaMismatchError(
                "task vector schema does not match the base parameters"
            )
    n = len(taus)
    grid = augment_grid(grid, n)

    cache: dict[tuple[float, ...], float] = {}
    log: list[SearchPoint] = []

    def eval_point(lambdas: tuple[float, ...]) -> float:
        if lambdas in cache:
            return cache[lambdas]
        merged = merge(
            theta_pre,
            [MergeTerm(lam, tau) for lam, tau in zip(lambdas, taus)],
        )
        score = float(evaluator(merged, validation))
        cache[lambdas] = score
        log.append(SearchPoint(lambdas=lambdas, score=score))
        return score

    if n <= 2:
        for lambdas in itertools.product(grid, repeat=n):
            eval_point(lambdas)
    else:
        _coordinate_ascent(n, grid, eval_point, log)

    best = max(point.score for point in log)
    chosen = next(point for point in log if point.score == best)
    return MergeSearchResult(
        lambdas=chosen.lambdas,
        score=chosen.score,
        evaluated=len(log),
        log=tuple(log),
    )


def _coordinate_ascent(
    n: int,
    grid: tuple[float, ...],
    eval_point: Callable[[tuple[float, ...]], float],
    log: list[SearchPoint],
) -> None:
    for i in range(n):
        eval_point(tuple(1.0 if j == i else 0.0 for j in range(n)))
    eval_point((1.0 / n,) * n)
    eval_point((1.0,) * n)
    best_seed = max(point.score for point in log)
    current = next(p for p in log if p.score == best_seed).lambdas
    for _ in range(ASCENT_SWEEPS):
        for i in range(n):
            best_value, best_score = None, None
            for value in grid:
                trial = current[:i] + (value,) + current[i + 1 :]
                score = eval_point(trial)
                if best_score is None or score > best_score:
                    best_value, best_score = value, score
            current = current[:i] + (best_value,) + current[i + 1 :]


def compose_experts(
    theta_pre: ParameterSet,
    tau_a: TaskVector,
    tau_b: TaskVector,
    lambdas: tuple[float, float],
    expert_ids: tuple[str, str] = ("expert_a", "expert_b"),
) -> tuple[ParameterSet, dict]:
    """Two-term merge plus a provenance record naming the ingredients."""
    lam_a, lam_b = (float(lambdas[0]), float(lambdas[1]))
    merged = merge(theta_pre, [MergeTerm(lam_a, tau_a), MergeTerm(lam_b, tau_b)])
    provenance = {
        "experts": [expert_ids[0], expert_ids[1]],
        "lambdas": [lam_a, lam_b],
        "base_checksum": theta_pre.checksum(),
    }
    return merged, provenance


# ------------------------------------------------------------------ log IO


def write_search_log(result: MergeSearchResult, path) -> None:
    """One line per evaluated point, then the chosen point flagged."""
    with open(path, "w", encoding="utf-8") as fh:
        for point in result.log:
            fh.write(json.dumps(point.to_record(), separators=(",", ":")) + "\n")
        final = SearchPoint(result.lambdas, result.score).to_record()
        final["chosen"] = True
        fh.write(json.dumps(final, separators=(",", ":")) + "\n")


def read_search_log(path) -> tuple[list[SearchPoint], SearchPoint]:
    """Inverse of write_search_log: (evaluated points, chosen point)."""
    points: list[SearchPoint] = []
    chosen: SearchPoint | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            point = SearchPoint(
                lambdas=tuple(float(v) for v in record["lambdas"]),
                score=float(record["score"]),
            )
            if record.get("chosen"):
                chosen = point
            else:
                points.append(point)
    if chosen is None:
        raise ValueError(f"{path}: no record is flagged chosen")
    return points, chosen
