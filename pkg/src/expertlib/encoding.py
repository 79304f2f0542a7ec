"""Key-text rendering and deterministic text embedding.

Library keys are rendered from a task instance with one of ten text format
variants. The `{answer_choice}` slot joins the choices with ``|`` (the literal
``None`` when there are no choices, i.e. a generative task); the
`{label_list}` slot prints the choices as a bracketed, single-quoted list.

The built-in embedder feature-hashes character n-grams into a fixed-dimension
vector with a sign hash and L2-normalizes. It is a deterministic, dependency
free stand-in for a sentence-embedding model; externally computed vectors can
be ingested instead via load_external_vectors.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._hashing import fnv1a64_seed_state, fnv1a64_windows
from .tasks import TaskInstance

FORMAT_TEMPLATES: dict[str, str] = {
    "a": "Instance: {instance}",
    "b": "Answer Choices: {label_list}",
    "c": "Answer Choices: {answer_choice}",
    "d": "Answer Choices: {label_list}, Instance: {instance}",
    "e": "Answer Choices: {answer_choice}, Instance: {instance}",
    "f": "{instance}",
    "g": "{label_list}",
    "h": "{answer_choice}",
    "i": "{label_list}</s>{instance}",
    "j": "{answer_choice}</s>{instance}",
}

# Variant (e), prompted instance plus answer choices, retrieves best.
DEFAULT_FORMAT = "e"

DEFAULT_DIM = 256
DEFAULT_NGRAM_SIZES = (3, 4, 5)


class DimensionMismatchError(ValueError):
    """External vectors in one file disagree on dimension."""


class VectorParseError(ValueError):
    """External vector file is not valid JSON-lines of id/vector records."""


class ZeroVectorError(ValueError):
    """A vector that must be normalizable has zero norm."""


def answer_choice_slot(choices: Sequence[str]) -> str:
    return "|".join(choices) if choices else "None"


def label_list_slot(choices: Sequence[str]) -> str:
    if not choices:
        return "None"
    return "[" + ", ".join(f"'{c}'" for c in choices) + "]"


def render_key(instance: TaskInstance, text_format: str = DEFAULT_FORMAT) -> str:
    """Render the library-key text for an instance under a format variant."""
    try:
        template = FORMAT_TEMPLATES[text_format]
    except KeyError:
        raise ValueError(
            f"unknown text format {text_format!r}; expected one of "
            f"{''.join(sorted(FORMAT_TEMPLATES))}"
        ) from None
    return template.format(
        instance=instance.prompted_input,
        answer_choice=answer_choice_slot(instance.answer_choices),
        label_list=label_list_slot(instance.answer_choices),
    )


class HashingTextEmbedder(BaseEstimator, TransformerMixin):
    """Character n-gram feature hashing into a unit-norm vector.

    Each n-gram is hashed with FNV-1a 64 (the configured seed is absorbed
    first); the low hash bit drives the sign and the remaining bits pick the
    bucket. Empty text (or text yielding no n-grams after the whole-text
    fallback) embeds to the all-zero vector, which is never normalized.

    Stateless: fit only validates parameters, transform embeds a sequence of
    texts row by row.
    """

    def __init__(
        self,
        dim: int = DEFAULT_DIM,
        ngram_sizes: Sequence[int] = DEFAULT_NGRAM_SIZES,
        seed: int = 0,
    ):
        self.dim = dim
        self.ngram_sizes = ngram_sizes
        self.seed = seed

    def _validate(self) -> tuple[int, tuple[int, ...], int]:
        dim = int(self.dim)
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {self.dim}")
        sizes = tuple(sorted(int(n) for n in self.ngram_sizes))
        if not sizes or any(n < 1 for n in sizes):
            raise ValueError(f"ngram_sizes must be nonempty positive ints, got {self.ngram_sizes}")
        return dim, sizes, fnv1a64_seed_state(int(self.seed))

    def fit(self, X=None, y=None) -> "HashingTextEmbedder":
        self._validate()
        return self

    def embed(self, text: str) -> np.ndarray:
        """Embed one text into a float32 vector of length ``dim``."""
        dim, sizes, seed_state = self._validate()
        vec = np.zeros(dim, dtype=np.float64)
        data = text.encode("utf-8")
        hashed_any = False
        for n in sizes:
            if len(data) < n:
                continue
            windows = np.lib.stride_tricks.sliding_window_view(
                np.frombuffer(data, dtype=np.uint8), n
            )
            self._accumulate(vec, fnv1a64_windows(windows, seed_state), dim)
            hashed_any = True
        if not hashed_any and data:
            # Shorter than every n-gram size: hash the whole text once so
            # nonempty text never embeds to zero.
            whole = np.frombuffer(data, dtype=np.uint8).reshape(1, -1)
            self._accumulate(vec, fnv1a64_windows(whole, seed_state), dim)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            return np.zeros(dim, dtype=np.float32)
        return (vec / norm).astype(np.float32)

    @staticmethod
    def _accumulate(vec: np.ndarray, hashes: np.ndarray, dim: int) -> None:
        signs = 1.0 - 2.0 * (hashes & np.uint64(1)).astype(np.float64)
        buckets = ((hashes >> np.uint64(1)) % np.uint64(dim)).astype(np.intp)
        np.add.at(vec, buckets, signs)

    def transform(self, X: Iterable[str]) -> np.ndarray:
        texts = list(X)
        dim, _, _ = self._validate()
        out = np.zeros((len(texts), dim), dtype=np.float32)
        for i, text in enumerate(texts):
            out[i] = self.embed(text)
        return out


def is_zero_vector(vec: np.ndarray) -> bool:
    return not np.any(vec)


def load_external_vectors(path) -> dict[str, np.ndarray]:
    """Read JSON-lines ``{"id": ..., "vector": [...]}`` records.

    Vectors are re-normalized to unit length; every record must share one
    dimension and none may be the zero vector.
    """
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                instance_id = record["id"]
                raw = record["vector"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise VectorParseError(f"{path}:{lineno}: {exc}") from exc
            vec = np.asarray(raw, dtype=np.float64)
            if vec.ndim != 1 or vec.size == 0:
                raise VectorParseError(f"{path}:{lineno}: vector must be a flat nonempty list")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise DimensionMismatchError(
                    f"{path}:{lineno}: vector has dimension {vec.size}, expected {dim}"
                )
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                raise ZeroVectorError(f"{path}:{lineno}: zero vector for id {instance_id!r}")
            vectors[str(instance_id)] = (vec / norm).astype(np.float32)
    return vectors
