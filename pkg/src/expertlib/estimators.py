"""scikit-learn estimator facade over library building and routing.

ExpertRouter.fit indexes (expert_id, task) pairs into an embedding library;
predict maps each unseen task to an expert id by Q-query majority vote.
partial_fit appends experts without touching existing entries, mirroring the
continual-learning workflow.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .encoding import DEFAULT_FORMAT
from .library import (
    DEFAULT_Q,
    DEFAULT_S,
    ExpertLibrary,
    RoutingDecision,
    add_expert,
    build_library,
    route,
)
from .tasks import TaskSet


class ExpertRouter(BaseEstimator):
    """Route task sets to expert ids via exact MIPS plus majority vote."""

    def __init__(
        self,
        S: int = DEFAULT_S,
        Q: int = DEFAULT_Q,
        text_format: str = DEFAULT_FORMAT,
        dim: int | None = None,
        seed: int = 0,
    ):
        self.S = S
        self.Q = Q
        self.text_format = text_format
        self.dim = dim
        self.seed = seed

    def fit(self, X: Iterable[tuple[str, TaskSet]], y=None) -> "ExpertRouter":
        self.library_ = build_library(
            list(X),
            dim=self.dim,
            text_format=self.text_format,
            S=self.S,
            seed=self.seed,
        )
        return self

    def partial_fit(self, X: Iterable[tuple[str, TaskSet]], y=None) -> "ExpertRouter":
        if not hasattr(self, "library_"):
            return self.fit(X, y)
        for expert_id, taskset in X:
            add_expert(self.library_, expert_id, taskset)
        return self

    @property
    def library(self) -> ExpertLibrary:
        self._require_fitted()
        return self.library_

    def _require_fitted(self) -> None:
        if not hasattr(self, "library_"):
            raise NotFittedError(
                "this ExpertRouter is not fitted yet; call fit with "
                "(expert_id, TaskSet) pairs"
            )

    def decide(self, taskset: TaskSet) -> RoutingDecision:
        self._require_fitted()
        return route(self.library_, taskset, Q=self.Q, seed=self.seed)

    def predict(self, X: Sequence[TaskSet]) -> np.ndarray:
        self._require_fitted()
        return np.asarray([self.decide(t).chosen_expert for t in X], dtype=object)
