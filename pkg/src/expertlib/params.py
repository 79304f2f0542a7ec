"""Named float32 tensor sets, task-vector arithmetic, and merging.

A ParameterSet is an ordered, immutable map from tensor name to a float32
array. Expert fine-tunes are represented as task vectors (fine-tuned minus
base, elementwise) and combined by adding weighted task vectors back onto the
base. All arithmetic accumulates in float64 and stores float32.

The on-disk format is a little-endian binary layout: magic ``ELMP``, version
u16, tensor count u32, then per tensor (name length u16, UTF-8 name, rank u8,
dims u32 each, raw float32 data), with a trailing CRC32 of everything before
it.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

MAGIC = b"ELMP"
FORMAT_VERSION = 1

Schema = tuple[tuple[str, tuple[int, ...]], ...]


class SchemaMismatchError(ValueError):
    """Tensor names, order, or shapes differ between two parameter sets."""


class EmptyTermsError(ValueError):
    """A merge was requested with no terms."""


class BadMagicError(ValueError):
    """File does not start with the expected magic bytes."""


class VersionUnsupportedError(ValueError):
    """File declares a format version this reader does not understand."""


class CorruptTensorHeaderError(ValueError):
    """Truncated or inconsistent tensor data, or checksum mismatch."""


class ParameterSet(Mapping[str, np.ndarray]):
    """Ordered map of tensor name -> read-only float32 array.

    Iteration order is insertion order; schema equality requires identical
    names, order, and shapes. All values must be finite.
    """

    __slots__ = ("_tensors",)

    def __init__(self, tensors: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]] = ()):
        items = tensors.items() if isinstance(tensors, Mapping) else tensors
        store: dict[str, np.ndarray] = {}
        for name, value in items:
            if not isinstance(name, str) or not name:
                raise ValueError(f"tensor name must be a nonempty string, got {name!r}")
            if name in store:
                raise ValueError(f"duplicate tensor name {name!r}")
            arr = np.asarray(value, dtype=np.float32)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"tensor {name!r} contains non-finite values")
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            store[name] = arr
        if not store:
            raise ValueError("a ParameterSet needs at least one tensor")
        self._tensors = store

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def schema(self) -> Schema:
        return tuple((name, arr.shape) for name, arr in self._tensors.items())

    def num_values(self) -> int:
        return sum(arr.size for arr in self._tensors.values())

    def bit_equal(self, other: "ParameterSet") -> bool:
        """Exact equality: same schema and identical float32 bit patterns."""
        if self.schema() != other.schema():
            return False
        return all(
            self[name].tobytes() == other[name].tobytes() for name in self._tensors
        )

    def to_bytes(self) -> bytes:
        parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(self._tensors))]
        for name, arr in self._tensors.items():
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ValueError(f"tensor name too long: {name!r}")
            if arr.ndim > 0xFF:
                raise ValueError(f"tensor rank too large for {name!r}")
            parts.append(struct.pack("<H", len(encoded)))
            parts.append(encoded)
            parts.append(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                parts.append(struct.pack("<I", dim))
            parts.append(arr.astype("<f4", copy=False).tobytes())
        body = b"".join(parts)
        return body + struct.pack("<I", zlib.crc32(body))

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ParameterSet":
        if len(blob) < len(MAGIC) + 2:
            raise BadMagicError("file too short to hold a header")
        if blob[: len(MAGIC)] != MAGIC:
            raise BadMagicError(f"bad magic bytes {blob[:len(MAGIC)]!r}")
        (version,) = struct.unpack_from("<H", blob, len(MAGIC))
        if version != FORMAT_VERSION:
            raise VersionUnsupportedError(f"unsupported format version {version}")
        if len(blob) < len(MAGIC) + 6 + 4:
            raise CorruptTensorHeaderError("file truncated before tensor table")
        body, (stored_crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
        if zlib.crc32(body) != stored_crc:
            raise CorruptTensorHeaderError("checksum mismatch")
        (count,) = struct.unpack_from("<I", body, len(MAGIC) + 2)
        offset = len(MAGIC) + 6
        tensors: list[tuple[str, np.ndarray]] = []
        for _ in range(count):
            try:
                (name_len,) = struct.unpack_from("<H", body, offset)
                offset += 2
                if len(body) < offset + name_len:
                    raise struct.error("name truncated")
                name = body[offset : offset + name_len].decode("utf-8")
                offset += name_len
                (rank,) = struct.unpack_from("<B", body, offset)
                offset += 1
                shape = struct.unpack_from(f"<{rank}I", body, offset)
                offset += 4 * rank
                size = int(np.prod(shape, dtype=np.int64)) if rank else 1
                raw = body[offset : offset + 4 * size]
                if len(raw) != 4 * size:
                    raise struct.error("tensor data truncated")
                offset += 4 * size
            except (struct.error, UnicodeDecodeError) as exc:
                raise CorruptTensorHeaderError(f"corrupt tensor header: {exc}") from exc
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
            tensors.append((name, arr))
        if offset != len(body):
            raise CorruptTensorHeaderError("trailing bytes after last tensor")
        try:
            return cls(tensors)
        except ValueError as exc:
            raise CorruptTensorHeaderError(str(exc)) from exc

    def checksum(self) -> int:
        """CRC32 of the canonical serialized form."""
        return zlib.crc32(self.to_bytes())

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}:{a.shape}" for n, a in self._tensors.items())
        return f"{type(self).__name__}({inner})"


class TaskVector(ParameterSet):
    """Elementwise difference between a fine-tuned and a base parameter set."""


@dataclass(frozen=True)
class MergeTerm:
    """One weighted task vector in a merge. The weight is unconstrained;
    weight sums above 1 are legal and sometimes optimal."""

    weight: float
    tau: TaskVector

    def __post_init__(self) -> None:
        if not np.isfinite(self.weight):
            raise ValueError(f"merge weight must be finite, got {self.weight}")


def _require_same_schema(a: ParameterSet, b: ParameterSet, what: str) -> None:
    if a.schema() != b.schema():
        raise SchemaMismatchError(f"{what}: schemas differ ({a.schema()} vs {b.schema()})")


def task_vector(theta_d: ParameterSet, theta_pre: ParameterSet) -> TaskVector:
    """Fine-tuned minus base, elementwise, computed in float64."""
    _require_same_schema(theta_d, theta_pre, "task_vector")
    return TaskVector(
        (name, theta_d[name].astype(np.float64) - theta_pre[name].astype(np.float64))
        for name in theta_d
    )


def merge(theta_pre: ParameterSet, terms: Iterable[MergeTerm]) -> ParameterSet:
    """Base plus the weighted sum of task vectors, accumulated in float64."""
    terms = list(terms)
    if not terms:
        raise EmptyTermsError("merge requires at least one term")
    for term in terms:
        _require_same_schema(term.tau, theta_pre, "merge")
    out: list[tuple[str, np.ndarray]] = []
    for name in theta_pre:
        acc = theta_pre[name].astype(np.float64)
        for term in terms:
            acc = acc + term.weight * term.tau[name].astype(np.float64)
        out.append((name, acc))
    return ParameterSet(out)


def uniform_merge(theta_pre: ParameterSet, taus: Iterable[TaskVector]) -> ParameterSet:
    """Merge with every weight equal to 1/N; the elementwise mean of the experts."""
    taus = list(taus)
    if not taus:
        raise EmptyTermsError("uniform_merge requires at least one task vector")
    weight = 1.0 / len(taus)
    return merge(theta_pre, [MergeTerm(weight, tau) for tau in taus])


def zeros_like(params: ParameterSet) -> ParameterSet:
    """Same schema, all zeros; the merge baseline for additive adapters."""
    return ParameterSet((name, np.zeros_like(params[name])) for name in params)


def save_params(params: ParameterSet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(params.to_bytes())


def load_params(path) -> ParameterSet:
    with open(path, "rb") as fh:
        return ParameterSet.from_bytes(fh.read())
