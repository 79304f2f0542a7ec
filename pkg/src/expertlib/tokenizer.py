"""Hashed whitespace tokenizer and instance-to-sequence encoding.

Tokens are lowercased whitespace-separated words hashed into a fixed vocab.
Id 0 is the end-of-sequence marker, id 1 the unknown/anchor token; word ids
occupy [2, vocab_size). The tokenizer is not invertible: generative scoring
compares token id sequences, never decoded strings.
"""

from __future__ import annotations

from dataclasses import dataclass

from ._hashing import fnv1a64
from .tasks import TaskInstance

EOS_ID = 0
UNK_ID = 1
NUM_RESERVED = 2


@dataclass(frozen=True)
class TokenSequence:
    """Token ids with a boundary splitting input segment from target segment."""

    ids: tuple[int, ...]
    segment_boundary: int

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if any(i < 0 for i in self.ids):
            raise ValueError("token ids must be nonnegative")
        if not 0 <= self.segment_boundary <= len(self.ids):
            raise ValueError(
                f"segment_boundary {self.segment_boundary} outside [0, {len(self.ids)}]"
            )

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def input_ids(self) -> tuple[int, ...]:
        return self.ids[: self.segment_boundary]

    @property
    def target_ids(self) -> tuple[int, ...]:
        return self.ids[self.segment_boundary :]


class HashTokenizer:
    """Deterministic hashing tokenizer over a fixed-size vocabulary."""

    def __init__(self, vocab_size: int = 512, seed: int = 0):
        if vocab_size < NUM_RESERVED + 1:
            raise ValueError(f"vocab_size must be > {NUM_RESERVED}, got {vocab_size}")
        self.vocab_size = int(vocab_size)
        self.seed = int(seed)

    def token_id(self, token: str) -> int:
        span = self.vocab_size - NUM_RESERVED
        return NUM_RESERVED + fnv1a64(token.lower().encode("utf-8"), self.seed) % span

    def encode_text(self, text: str) -> list[int]:
        return [self.token_id(tok) for tok in text.split()]

    def encode_instance(
        self,
        instance: TaskInstance,
        max_tokens: int,
        target_text: str | None = None,
        with_eos: bool = True,
    ) -> TokenSequence:
        """Encode input and target segments into one bounded sequence.

        ``target_text`` overrides the instance target (used to score each
        answer choice in turn). An empty input segment is anchored to a single
        unknown token so the target always has at least one context position.
        When the pair overflows ``max_tokens`` the input segment is truncated
        from the left (the tokens nearest the target carry the most signal)
        and the target from the right as a last resort.
        """
        input_ids = self.encode_text(instance.prompted_input) or [UNK_ID]
        target = instance.target if target_text is None else target_text
        target_ids = self.encode_text(target) or [UNK_ID]
        if with_eos:
            target_ids = target_ids + [EOS_ID]
        budget = max_tokens - len(target_ids)
        if budget < 1:
            target_ids = target_ids[: max_tokens - 1]
            budget = 1
        if len(input_ids) > budget:
            input_ids = input_ids[-budget:]
        return TokenSequence(
            ids=tuple(input_ids + target_ids), segment_boundary=len(input_ids)
        )
