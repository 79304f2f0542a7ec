"""Task instances and task-set disk format.

A task is a named, nonempty set of prompted instances, all of one kind:
classification (every instance lists answer choices) or generative (no
instance does). Task sets round-trip through a JSON-lines file with one
instance per line: ``{"id": ..., "input": ..., "choices": [...], "target":
...}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

SPLITS = ("train", "validation", "test")


class TaskParseError(ValueError):
    """A task file line is not a valid instance record."""


class TargetNotInChoicesError(ValueError):
    """A classification instance's target is missing from its choices."""


class MixedKindError(ValueError):
    """A task set mixes classification and generative instances."""


@dataclass(frozen=True)
class TaskInstance:
    """One prompted example of a task."""

    instance_id: str
    prompted_input: str
    answer_choices: tuple[str, ...]
    target: str

    def __post_init__(self):
        if not self.instance_id:
            raise ValueError("instance_id must be nonempty")
        if not self.target:
            raise ValueError(f"instance {self.instance_id!r}: target must be nonempty")
        object.__setattr__(self, "answer_choices", tuple(self.answer_choices))
        if self.answer_choices and self.target not in self.answer_choices:
            raise TargetNotInChoicesError(
                f"instance {self.instance_id!r}: target {self.target!r} "
                f"not among choices {list(self.answer_choices)}"
            )

    @property
    def is_classification(self) -> bool:
        return bool(self.answer_choices)

    def to_record(self) -> dict:
        return {
            "id": self.instance_id,
            "input": self.prompted_input,
            "choices": list(self.answer_choices),
            "target": self.target,
        }

    @classmethod
    def from_record(cls, record: dict) -> "TaskInstance":
        try:
            return cls(
                instance_id=str(record["id"]),
                prompted_input=str(record["input"]),
                answer_choices=tuple(str(c) for c in record["choices"]),
                target=str(record["target"]),
            )
        except KeyError as exc:
            raise TaskParseError(f"missing field {exc}") from exc


@dataclass(frozen=True)
class TaskSet:
    """An ordered, kind-homogeneous collection of instances."""

    name: str
    instances: tuple[TaskInstance, ...]
    split: str = "train"

    def __post_init__(self):
        if not self.name:
            raise ValueError("name must be nonempty")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        object.__setattr__(self, "instances", tuple(self.instances))
        if not self.instances:
            raise ValueError(f"task {self.name!r} has no instances")
        seen: set[str] = set()
        for inst in self.instances:
            if inst.instance_id in seen:
                raise ValueError(f"duplicate instance id {inst.instance_id!r}")
            seen.add(inst.instance_id)
        first = self.instances[0].is_classification
        for inst in self.instances:
            if inst.is_classification != first:
                raise MixedKindError(
                    f"task {self.name!r} mixes classification and generative "
                    f"instances (first mismatch at {inst.instance_id!r})"
                )

    @property
    def kind(self) -> str:
        return "classification" if self.instances[0].is_classification else "generative"

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[TaskInstance]:
        return iter(self.instances)

    def __getitem__(self, idx: int) -> TaskInstance:
        return self.instances[idx]


def save_taskset(taskset: TaskSet, path) -> None:
    """Write one instance per line; key order is fixed for byte stability."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in taskset.instances:
            fh.write(json.dumps(inst.to_record(), sort_keys=True) + "\n")


def load_taskset(path, name: str | None = None, split: str = "train") -> TaskSet:
    """Read a task file; the task name defaults to the file's stem."""
    if name is None:
        name = _stem(path)
    instances = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TaskParseError(f"{path}:{lineno}: {exc}") from exc
            try:
                instances.append(TaskInstance.from_record(record))
            except TargetNotInChoicesError:
                raise
            except (TaskParseError, ValueError) as exc:
                raise TaskParseError(f"{path}:{lineno}: {exc}") from exc
    if not instances:
        raise TaskParseError(f"{path}: no instances")
    return TaskSet(name=name, instances=tuple(instances), split=split)


def _stem(path) -> str:
    base = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return base.rsplit(".", 1)[0] if "." in base else base


def split_taskset(
    taskset: TaskSet, train_fraction: float, seed: int
) -> tuple[TaskSet, TaskSet]:
    """Deterministic shuffled split into train and validation subsets.

    Both halves keep the parent task name; the split is seeded so a given
    (taskset, fraction, seed) triple always yields the same partition.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(taskset)
    if n < 2:
        raise ValueError("need at least 2 instances to split")
    order = np.random.default_rng(seed).permutation(n)
    n_train = max(1, min(n - 1, int(round(n * train_fraction))))
    train_idx = sorted(order[:n_train].tolist())
    val_idx = sorted(order[n_train:].tolist())
    train = TaskSet(taskset.name, tuple(taskset[i] for i in train_idx), split="train")
    val = TaskSet(taskset.name, tuple(taskset[i] for i in val_idx), split="validation")
    return train, val


def subset(taskset: TaskSet, indices: Sequence[int]) -> TaskSet:
    return TaskSet(taskset.name, tuple(taskset[i] for i in indices), split=taskset.split)
