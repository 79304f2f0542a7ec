"""Expert registry and the instance-embedding library with vote routing.

The library is a key-value index: keys are unit-norm instance embeddings,
values are expert ids. Building it samples up to S instances per expert,
renders their key texts under one format variant, and embeds them. Routing
embeds Q sampled instances of a target task, finds each query's exact
nearest key by inner product (unit norms make that cosine), and majority
votes; ties fall back to summed scores, then to the lexicographically
smallest expert id.

On disk the library is JSON-lines: one header line, then one line per entry
in insertion order. Adding an expert appends lines without touching existing
ones, so growing the library never perturbs earlier routing state.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .encoding import (
    DEFAULT_FORMAT,
    FORMAT_TEMPLATES,
    HashingTextEmbedder,
    is_zero_vector,
    render_key,
)
from .tasks import TaskInstance, TaskSet

LIBRARY_VERSION = 1
DEFAULT_S = 100
DEFAULT_Q = 32


class LibraryParseError(ValueError):
    """Library or registry file is not valid JSON-lines of the right shape."""


class DanglingExpertIdError(ValueError):
    """Entry references an expert missing from the registry."""


class DuplicateExpertIdError(ValueError):
    """Expert id already present where uniqueness is required."""


class EmptyLibraryError(ValueError):
    """Search or routing over a library with no entries."""


class ZeroKeyError(ValueError):
    """An instance embedded to the zero vector and cannot serve as a key."""


@dataclass(frozen=True)
class LibraryEntry:
    """One key-value pair: an instance embedding owned by an expert."""

    key: np.ndarray
    expert: str
    instance: str

    def __post_init__(self):
        arr = np.ascontiguousarray(self.key, dtype=np.float32)
        arr.flags.writeable = False
        object.__setattr__(self, "key", arr)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("key must be a flat nonempty vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("key must be finite")
        if not self.expert or not self.instance:
            raise ValueError("expert and instance ids must be nonempty")

    def to_record(self) -> dict:
        return {
            "key": self.key.tolist(),
            "expert": self.expert,
            "instance": self.instance,
        }



@dataclass(frozen=True)
class QueryMatch:
    """One routed query: which entry won and at what inner-product score."""

    query: str
    expert: str
    entry_instance: str
    score: float

    def to_record(self) -> dict:
        return {
            "query": self.query,
            "expert": self.expert,
            "entry": self.entry_instance,
            "score": float(self.score),
        }


@dataclass(frozen=True)
class RoutingDecision:
    """Majority-vote outcome over the sampled query instances."""

    chosen_expert: str
    votes: dict[str, int]
    scores: dict[str, float]
    per_query: tuple[QueryMatch, ...]
    seed: int

    def __post_init__(self):
        if sum(self.votes.values()) != len(self.per_query):
            raise ValueError("votes must sum to the number of queries")

    @property
    def num_queries(self) -> int:
        return len(self.per_query)

    def to_record(self) -> dict:
        return {
            "chosen_expert": self.chosen_expert,
            "votes": dict(self.votes),
            "scores": {k: float(v) for k, v in self.scores.items()},
            "per_query": [m.to_record() for m in self.per_query],
            "seed": self.seed,
        }


class ExpertLibrary:
    """In-memory library: header fields plus ordered entries."""

    def __init__(
        self,
        dim: int,
        text_format: str = DEFAULT_FORMAT,
        S: int = DEFAULT_S,
        seed: int = 0,
        entries: Sequence[LibraryEntry] = (),
    ):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if text_format not in FORMAT_TEMPLATES:
            raise ValueError(f"unknown text format {text_format!r}")
        if S < 1:
            raise ValueError("S must be >= 1")
        self.dim = int(dim)
        self.text_format = text_format
        self.S = int(S)
        self.seed = int(seed)
        self._entries: list[LibraryEntry] = []
        self._matrix: np.ndarray | None = None
        for entry in entries:
            self._append(entry)

    def _append(self, entry: LibraryEntry) -> None:
        if entry.key.shape != (self.dim,):
            raise ValueError(
                f"entry key has shape {entry.key.shape}, library dim is {self.dim}"
            )
        self._entries.append(entry)
        self._matrix = None

    @property
    def entries(self) -> tuple[LibraryEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def expert_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for entry in self._entries:
            seen.setdefault(entry.expert, None)
        return tuple(seen)

    def num_experts(self) -> int:
        return len(self.expert_ids())

    def header(self) -> dict:
        return {
            "version": LIBRARY_VERSION,
            "dim": self.dim,
            "format": self.text_format,
            "S": self.S,
            "seed": self.seed,
        }

    def _key_matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.stack(
                [entry.key for entry in self._entries]
            ).astype(np.float64)
        return self._matrix

    def nearest_index(self, query: np.ndarray) -> tuple[int, float]:
        """Exact full-scan maximum inner product; ties pick the lowest index."""
        if not self._entries:
            raise EmptyLibraryError("library has no entries")
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(f"query has shape {q.shape}, library dim is {self.dim}")
        scores = self._key_matrix() @ q
        idx = int(np.argmax(scores))
        return idx, float(scores[idx])


def nearest(library: ExpertLibrary, query: np.ndarray) -> tuple[LibraryEntry, float]:
    idx, score = library.nearest_index(query)
    return library.entries[idx], score


def decide_votes(per_query: Sequence[tuple[str, float]]) -> str:
    """Majority vote over (expert, score) pairs with the fixed tie chain.

    Stage 1: most votes. Stage 2: highest summed score among the vote-tied.
    Stage 3: lexicographically smallest expert id among the score-tied.
    """
    if not per_query:
        raise EmptyLibraryError("no query results to vote on")
    votes: dict[str, int] = {}
    scores: dict[str, float] = {}
    for expert, score in per_query:
        votes[expert] = votes.get(expert, 0) + 1
        scores[expert] = scores.get(expert, 0.0) + float(score)
    top_votes = max(votes.values())
    tied = [e for e, v in votes.items() if v == top_votes]
    top_score = max(scores[e] for e in tied)
    tied = [e for e in tied if scores[e] == top_score]
    return min(tied)


def route(
    library: ExpertLibrary,
    target: TaskSet | Sequence[TaskInstance],
    Q: int = DEFAULT_Q,
    seed: int = 0,
    embedder: HashingTextEmbedder | None = None,
    vectors: Mapping[str, np.ndarray] | None = None,
) -> RoutingDecision:
    """Pick the expert for a target task by Q-query majority vote.

    min(Q, |target|) instances are sampled without replacement (seeded),
    rendered under the library's own format variant, embedded, and matched
    to their nearest keys. ``vectors`` substitutes externally computed
    instance embeddings keyed by instance id.
    """
    if Q < 1:
        raise ValueError("Q must be >= 1")
    if len(library) == 0:
        raise EmptyLibraryError("cannot route against an empty library")
    pool = list(target.instances) if isinstance(target, TaskSet) else list(target)
    if not pool:
        raise ValueError("target task has no instances")
    instances = _sample_instances(pool, Q, np.random.default_rng(seed))
    keys = _embed_instances(instances, library.text_format, library.dim,
                            embedder, vectors, require_nonzero=False)
    per_query = []
    for instance, key in zip(instances, keys):
        idx, score = library.nearest_index(key)
        entry = library.entries[idx]
        per_query.append(QueryMatch(query=instance.instance_id,
                                    expert=entry.expert,
                                    entry_instance=entry.instance,
                                    score=score))
    votes: dict[str, int] = {}
    scores: dict[str, float] = {}
    for match in per_query:
        votes[match.expert] = votes.get(match.expert, 0) + 1
        scores[match.expert] = scores.get(match.expert, 0.0) + match.score
    chosen = decide_votes([(m.expert, m.score) for m in per_query])
    return RoutingDecision(chosen_expert=chosen, votes=votes, scores=scores,
                           per_query=tuple(per_query), seed=int(seed))


def best_expert(metric_by_expert: Mapping[str, float]) -> tuple[str, float]:
    """Highest metric wins; ties pick the lexicographically smallest id."""
    if not metric_by_expert:
        raise ValueError("need at least one expert metric")
    best = max(metric_by_expert.values())
    return min(e for e, v in metric_by_expert.items() if v == best), float(best)


def oracle_route(
    expert_ids: Sequence[str],
    target: TaskSet,
    evaluator: Callable[[str, TaskSet], float],
) -> tuple[str, float]:
    """Upper-bound routing: evaluate every expert on the target, take the best."""
    if not expert_ids:
        raise ValueError("need at least one expert")
    return best_expert({eid: float(evaluator(eid, target)) for eid in expert_ids})


def _sample_instances(
    pool: Sequence[TaskInstance], cap: int, rng: np.random.Generator
) -> list[TaskInstance]:
    if len(pool) <= cap:
        return list(pool)
    picked = sorted(rng.choice(len(pool), size=cap, replace=False).tolist())
    return [pool[i] for i in picked]


def _embed_instances(
    instances: Sequence[TaskInstance],
    text_format: str,
    dim: int,
    embedder: HashingTextEmbedder | None,
    vectors: Mapping[str, np.ndarray] | None,
    require_nonzero: bool,
) -> np.ndarray:
    if vectors is not None:
        rows = []
        for instance in instances:
            if instance.instance_id not in vectors:
                raise KeyError(
                    f"no external vector for instance {instance.instance_id!r}"
                )
            rows.append(np.asarray(vectors[instance.instance_id], dtype=np.float32))
        out = np.stack(rows)
        if out.shape[1] != dim:
            raise ValueError(f"external vectors have dim {out.shape[1]}, need {dim}")
    else:
        emb = embedder or HashingTextEmbedder(dim=dim)
        texts = [render_key(instance, text_format) for instance in instances]
        out = emb.transform(texts)
        if out.shape[1] != dim:
            raise ValueError(f"embedder produced dim {out.shape[1]}, need {dim}")
    if require_nonzero:
        for instance, row in zip(instances, out):
            if is_zero_vector(row):
                raise ZeroKeyError(
                    f"instance {instance.instance_id!r} embeds to the zero vector"
                )
    return out


def add_expert(
    library: ExpertLibrary,
    expert_id: str,
    taskset: TaskSet,
    embedder: HashingTextEmbedder | None = None,
    vectors: Mapping[str, np.ndarray] | None = None,
) -> list[LibraryEntry]:
    """Append min(S, |task|) entries for a new expert; returns the new entries.

    The sampling stream is seeded by (library seed, number of experts already
    present), so adding experts one at a time writes the same bytes as
    building the whole library at once.
    """
    if expert_id in library.expert_ids():
        raise DuplicateExpertIdError(
            f"expert {expert_id!r} already has library entries"
        )
    rng = np.random.default_rng(
        np.random.SeedSequence([library.seed, library.num_experts()])
    )
    instances = _sample_instances(list(taskset.instances), library.S, rng)
    keys = _embed_instances(instances, library.text_format, library.dim,
                            embedder, vectors, require_nonzero=True)
    new_entries = [
        LibraryEntry(key=key, expert=expert_id, instance=instance.instance_id)
        for instance, key in zip(instances, keys)
    ]
    for entry in new_entries:
        library._append(entry)
    return new_entries


def build_library(
    experts: Sequence[tuple[str, TaskSet]],
    dim: int | None = None,
    text_format: str = DEFAULT_FORMAT,
    S: int = DEFAULT_S,
    seed: int = 0,
    embedder: HashingTextEmbedder | None = None,
    vectors: Mapping[str, np.ndarray] | None = None,
) -> ExpertLibrary:
    """Embed up to S sampled instances per expert into a fresh library."""
    if not experts:
        raise ValueError("need at least one expert")
    if dim is None:
        if vectors is not None:
            dim = len(np.asarray(next(iter(vectors.values()))))
        else:
            embedder = embedder or HashingTextEmbedder()
            dim = int(embedder.dim)
    library = ExpertLibrary(dim=dim, text_format=text_format, S=S, seed=seed)
    for expert_id, taskset in experts:
        add_expert(library, expert_id, taskset, embedder=embedder,
                   vectors=vectors)
    return library


# ------------------------------------------------------------------- disk IO


_COMPACT = {"separators": (",", ":")}


def entry_lines(entries: Iterable[LibraryEntry]) -> list[str]:
    """Serialize entries; 9 significant digits round-trip float32 exactly."""
    lines = []
    template = ""
    template_dim = -1
    for entry in entries:
        vals = entry.key.tolist()
        if len(vals) != template_dim:
            template_dim = len(vals)
            template = ",".join(["%.9g"] * template_dim)
        lines.append(
            '{"key":[%s],"expert":%s,"instance":%s}'
            % (template % tuple(vals), json.dumps(entry.expert),
               json.dumps(entry.instance))
        )
    return lines


def save_library(library: ExpertLibrary, path) -> None:
    """Header line then one line per entry, byte-deterministic."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(library.header(), **_COMPACT) + "\n")
        for line in entry_lines(library.entries):
            fh.write(line + "\n")


def append_entries(path, entries: Sequence[LibraryEntry]) -> None:
    """Grow an existing library file without rewriting any prior bytes."""
    with open(path, "a", encoding="utf-8") as fh:
        for line in entry_lines(entries):
            fh.write(line + "\n")


def load_library(path, known_experts: Iterable[str] | None = None) -> ExpertLibrary:
    """Parse a library file; with ``known_experts``, reject dangling ids."""
    known = set(known_experts) if known_experts is not None else None
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise LibraryParseError(f"{path}: missing header line")
        try:
            header = json.loads(header_line)
            version = header["version"]
            library = ExpertLibrary(
                dim=int(header["dim"]),
                text_format=str(header["format"]),
                S=int(header["S"]),
                seed=int(header["seed"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise LibraryParseError(f"{path}:1: bad header: {exc}") from exc
        if version != LIBRARY_VERSION:
            raise LibraryParseError(f"{path}: unsupported version {version!r}")
        lines = [line for line in fh.read().splitlines() if line.strip()]
    try:
        parsed = _parse_entry_lines_bulk(lines)
    except Exception:
        parsed = _parse_entry_lines_strict(path, lines)
    for lineno, (key, expert, instance) in enumerate(parsed, start=2):
        try:
            entry = LibraryEntry(key=key, expert=expert, instance=instance)
        except (TypeError, ValueError) as exc:
            raise LibraryParseError(f"{path}:{lineno}: {exc}") from exc
        if known is not None and entry.expert not in known:
            raise DanglingExpertIdError(
                f"{path}:{lineno}: entry references unknown expert "
                f"{entry.expert!r}"
            )
        library._append(entry)
    return library


def _parse_entry_lines_bulk(lines: Sequence[str]):
    """Fast path for files this module wrote: the key array comes first on
    every line, so its float block can be sliced out and parsed in one
    vectorized pass instead of 100-per-entry json number parses."""
    key_texts = []
    rests = []
    for line in lines:
        if not line.startswith('{"key":['):
            raise ValueError("key is not the leading field")
        end = line.index("]")
        key_texts.append(line[8:end])
        rests.append(json.loads("{" + line[end + 2 :]))
    if not lines:
        return []
    keys = np.loadtxt(key_texts, delimiter=",", dtype=np.float32, ndmin=2)
    if keys.shape[0] != len(lines):
        raise ValueError("row count mismatch")
    keys.flags.writeable = False  # rows become copy-free entry keys
    return [
        (keys[i], str(rest["expert"]), str(rest["instance"]))
        for i, rest in enumerate(rests)
    ]


def _parse_entry_lines_strict(path, lines: Sequence[str]):
    parsed = []
    for lineno, line in enumerate(lines, start=2):
        try:
            record = json.loads(line)
            parsed.append(
                (
                    np.asarray(record["key"], dtype=np.float32),
                    str(record["expert"]),
                    str(record["instance"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise LibraryParseError(f"{path}:{lineno}: {exc}") from exc
    return parsed


# ------------------------------------------------------------ expert registry

_PROMPT_SUFFIX = re.compile(r"^(.+)_(prompt\d+)$")


def source_from_task_name(name: str) -> tuple[str, str | None]:
    """Split a task name into (dataset, prompt variant or None)."""
    m = _PROMPT_SUFFIX.match(name)
    if m:
        return m.group(1), m.group(2)
    return name, None


def task_name_from_source(source: tuple[str, str | None]) -> str:
    dataset, prompt = source
    return f"{dataset}_{prompt}" if prompt else dataset


@dataclass(frozen=True)
class ExpertRecord:
    """Registry row: what an expert is and where its parameters live."""

    expert_id: str
    kind: str  # "pe" (adapter over a frozen base) or "de" (full fine-tune)
    source: tuple[str, str | None]
    params_path: str

    def __post_init__(self):
        if not self.expert_id:
            raise ValueError("expert_id must be nonempty")
        if self.kind not in ("pe", "de"):
            raise ValueError(f"kind must be 'pe' or 'de', got {self.kind!r}")
        if len(self.source) != 2 or not self.source[0]:
            raise ValueError("source must be (dataset, prompt-or-None)")
        object.__setattr__(self, "source", (self.source[0], self.source[1]))

    def to_record(self) -> dict:
        return {
            "id": self.expert_id,
            "kind": self.kind,
            "source": [self.source[0], self.source[1]],
            "params_path": self.params_path,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ExpertRecord":
        try:
            dataset, prompt = record["source"]
            return cls(
                expert_id=str(record["id"]),
                kind=str(record["kind"]),
                source=(str(dataset), None if prompt is None else str(prompt)),
                params_path=str(record["params_path"]),
            )
        except KeyError as exc:
            raise LibraryParseError(f"registry record missing field {exc}") from exc


def append_registry(path, record: ExpertRecord) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record.to_record(), **_COMPACT) + "\n")


def load_registry(path) -> dict[str, ExpertRecord]:
    """Ordered map of expert id -> record; duplicate ids are rejected."""
    records: dict[str, ExpertRecord] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = ExpertRecord.from_record(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                raise LibraryParseError(f"{path}:{lineno}: {exc}") from exc
            if record.expert_id in records:
                raise DuplicateExpertIdError(
                    f"{path}:{lineno}: duplicate expert id {record.expert_id!r}"
                )
            records[record.expert_id] = record
    return records
