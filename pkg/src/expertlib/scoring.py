"""Instance-level scoring and decoding on top of a cached model.

A ModelScorer owns one expert (base params, optional adapter) plus the
tokenizer and exposes the three hooks the evaluation harness dispatches on:
``score`` (target-segment log-likelihood of arbitrary text, used for rank
classification), ``decode_ids`` (greedy continuation), and ``reference_ids``
(the tokenized gold target, since the hashing tokenizer cannot detokenize,
generative metrics compare token ids).
"""

from __future__ import annotations

from .model import ADAPTER_PREFIX, CachedModel
from .params import ParameterSet
from .tasks import TaskInstance
from .tokenizer import UNK_ID, HashTokenizer


def is_adapter_set(params: ParameterSet) -> bool:
    """True when every tensor carries the adapter prefix (a PE file)."""
    return all(name.startswith(ADAPTER_PREFIX) for name in params)


class ModelScorer:
    """Score and decode task instances with one (base, adapter) pair."""

    def __init__(
        self,
        params: ParameterSet,
        adapter: ParameterSet | None = None,
        tokenizer: HashTokenizer | None = None,
        expert_id: str = "expert",
    ):
        self.model = CachedModel(params, adapter)
        self.tokenizer = tokenizer or HashTokenizer(
            vocab_size=self.model.config.vocab_size
        )
        self.expert_id = expert_id

    def score(self, instance: TaskInstance, target_text: str) -> float:
        """Log-likelihood of ``target_text`` as the instance's target segment.

        Answer choices are scored verbatim, with no end-of-sequence token, so
        the comparison between choices covers exactly the choice tokens.
        """
        tokens = self.tokenizer.encode_instance(
            instance, self.model.config.max_tokens,
            target_text=target_text, with_eos=False,
        )
        return self.model.target_log_likelihood(tokens)

    def prompt_ids(self, instance: TaskInstance) -> tuple[int, ...]:
        ids = self.tokenizer.encode_text(instance.prompted_input) or [UNK_ID]
        room = self.model.config.max_tokens - 1
        if len(ids) > room:
            ids = ids[-room:]
        return tuple(ids)

    def reference_ids(self, instance: TaskInstance) -> tuple[int, ...]:
        return tuple(self.tokenizer.encode_text(instance.target) or [UNK_ID])

    def decode_ids(self, instance: TaskInstance, max_len: int) -> tuple[int, ...]:
        return self.model.greedy(self.prompt_ids(instance), max_len)
