"""Synthetic task families: seeded, deterministic, desk-scale.

Classification families: each family owns a topic word, a query-word pool,
a label set, and a fixed query-to-label mapping. A task is one (family,
prompt template) pair; templates embed the topic and end with the query word
so the final input position carries the class signal. The vocabulary overlap
parameter controls how much of each family's query pool is drawn from a pool
shared across families, which tunes how separable families look to the text
embedder.

Generative tasks (token copying, reversal, and their concatenation) come
from standalone builders; they use fixed word counts per instance so
positional attention patterns are learnable from absolute positions.

All words are pseudo-words built from consonant-vowel syllables, chosen so
that no two words within a family collide under the model tokenizer's hash.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tasks import TaskInstance, TaskSet
from .tokenizer import HashTokenizer

# Each template mentions the family topic and ends with the query word.
PROMPT_TEMPLATES = (
    "{topic} quiz : sort the next word : {query}",
    "for the {topic} guide , label this entry : {query}",
    "{topic} survey answer : decide the group of : {query}",
    "new {topic} round ; place the term : {query}",
    "in this {topic} drill , name the class of : {query}",
    "{topic} practice sheet : mark the word : {query}",
    "during the {topic} review , tag the item : {query}",
    "{topic} workbook page : file the token : {query}",
)

CONSONANTS = "bdfgklmnprstvz"
VOWELS = "aeiou"

QUERY_POOL_SIZE = 12
SHARED_POOL_SIZE = 40


@dataclass(frozen=True)
class SynthTaskSpec:
    """Shape of a synthetic classification suite."""

    families: int = 12
    prompts_per_family: int = 4
    instances_per_task: int = 200
    vocab_overlap: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.families < 1 or self.prompts_per_family < 1 or self.instances_per_task < 1:
            raise ValueError("all counts must be >= 1")
        if self.prompts_per_family > len(PROMPT_TEMPLATES):
            raise ValueError(
                f"at most {len(PROMPT_TEMPLATES)} prompts per family supported"
            )
        if not 0.0 <= self.vocab_overlap <= 1.0:
            raise ValueError("vocab_overlap must lie in [0, 1]")


def pseudo_word(rng: np.random.Generator, syllables: int = 2) -> str:
    parts = []
    for _ in range(syllables):
        parts.append(CONSONANTS[int(rng.integers(len(CONSONANTS)))])
        parts.append(VOWELS[int(rng.integers(len(VOWELS)))])
    return "".join(parts)


def sample_words(
    rng: np.random.Generator,
    count: int,
    taken_ids: set[int],
    tokenizer: HashTokenizer,
    syllables: int = 2,
) -> list[str]:
    """Draw pseudo-words whose token ids are fresh w.r.t. ``taken_ids``.

    Hash collisions inside one family would silently merge two queries (or a
    query and a label) into one model token and put a floor on attainable
    accuracy, so words are redrawn until their ids are distinct.
    """
    words: list[str] = []
    while len(words) < count:
        word = pseudo_word(rng, syllables)
        token = tokenizer.token_id(word)
        if token in taken_ids:
            continue
        taken_ids.add(token)
        words.append(word)
    return words


def task_name(family: int, prompt: int) -> str:
    return f"family{family:02d}_prompt{prompt}"


def family_of(name: str) -> str:
    """Family identifier shared by all prompt variants of one dataset."""
    return name.split("_", 1)[0]


@dataclass(frozen=True)
class FamilyData:
    topic: str
    queries: tuple[str, ...]
    labels: tuple[str, ...]
    mapping: dict[str, str]


def _family_data(spec: SynthTaskSpec, family: int,
                 tokenizer: HashTokenizer) -> FamilyData:
    # The shared pool is identical across families (same seed stream); family
    # streams are independent of each other and of the split being generated.
    shared_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 999_983]))
    shared_pool = [pseudo_word(shared_rng) for _ in range(SHARED_POOL_SIZE)]

    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, family]))
    taken: set[int] = set()
    topic = sample_words(rng, 1, taken, tokenizer, syllables=3)[0]

    num_shared = int(round(spec.vocab_overlap * QUERY_POOL_SIZE))
    queries: list[str] = []
    if num_shared:
        picks = rng.choice(len(shared_pool), size=num_shared, replace=False)
        for i in picks:
            word = shared_pool[int(i)]
            token = tokenizer.token_id(word)
            if token in taken:
                continue
            taken.add(token)
            queries.append(word)
    queries += sample_words(rng, QUERY_POOL_SIZE - len(queries), taken, tokenizer)

    num_labels = 2 + family % 3
    labels = tuple(sample_words(rng, num_labels, taken, tokenizer, syllables=3))

    # Shuffled round-robin keeps label counts balanced within the family.
    order = rng.permutation(len(queries))
    mapping = {queries[int(q)]: labels[pos % num_labels]
               for pos, q in enumerate(order)}
    return FamilyData(topic=topic, queries=tuple(queries), labels=labels,
                      mapping=mapping)


_SPLIT_INDEX = {"train": 0, "validation": 1, "test": 2}


def generate_synth_tasks(
    spec: SynthTaskSpec,
    split: str = "train",
    instances: int | None = None,
    tokenizer: HashTokenizer | None = None,
) -> list[TaskSet]:
    """families x prompts classification TaskSets for one split.

    Splits reuse each family's pools and mapping but draw instances from
    disjoint seeded streams, so train/validation/test never share instance
    ids and repeat runs are byte-identical.
    """
    if split not in _SPLIT_INDEX:
        raise ValueError(f"unknown split {split!r}")
    count = spec.instances_per_task if instances is None else int(instances)
    if count < 1:
        raise ValueError("instances must be >= 1")
    tokenizer = tokenizer or HashTokenizer()
    tasks: list[TaskSet] = []
    for family in range(spec.families):
        data = _family_data(spec, family, tokenizer)
        for prompt in range(spec.prompts_per_family):
            template = PROMPT_TEMPLATES[prompt]
            rng = np.random.default_rng(
                np.random.SeedSequence(
                    [spec.seed, family, prompt, _SPLIT_INDEX[split]]
                )
            )
            name = task_name(family, prompt)
            instances_out = []
            for k in range(count):
                query = data.queries[int(rng.integers(len(data.queries)))]
                instances_out.append(TaskInstance(
                    instance_id=f"{name}-{split}-{k:04d}",
                    prompted_input=template.format(topic=data.topic, query=query),
                    answer_choices=data.labels,
                    target=data.mapping[query],
                ))
            tasks.append(TaskSet(name=name, instances=tuple(instances_out),
                                 split=split))
    return tasks


# ---------------------------------------------------------- generative tasks


def _word_pool(seed: int, size: int, tokenizer: HashTokenizer) -> list[str]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 424_243]))
    return sample_words(rng, size, set(), tokenizer)


def _sequence_task(
    name: str,
    prefix: str,
    render_target,
    num_instances: int,
    seed: int,
    split: str,
    words_per_instance: int,
    pool_size: int,
    tokenizer: HashTokenizer | None,
) -> TaskSet:
    tokenizer = tokenizer or HashTokenizer()
    pool = _word_pool(seed, pool_size, tokenizer)
    rng = np.random.default_rng(
        np.random.SeedSequence([seed, 97, _SPLIT_INDEX[split]])
    )
    instances = []
    for k in range(num_instances):
        picks = rng.choice(len(pool), size=words_per_instance, replace=False)
        words = [pool[int(i)] for i in picks]
        instances.append(TaskInstance(
            instance_id=f"{name}-{split}-{k:04d}",
            prompted_input=f"{prefix} : " + " ".join(words),
            answer_choices=(),
            target=render_target(words),
        ))
    return TaskSet(name=name, instances=tuple(instances), split=split)


def make_copy_task(num_instances: int, seed: int, split: str = "train",
                   words_per_instance: int = 3, pool_size: int = 20,
                   tokenizer: HashTokenizer | None = None) -> TaskSet:
    """Echo the word sequence: 'copy : a b c' -> 'a b c'."""
    return _sequence_task("copy", "copy", lambda ws: " ".join(ws),
                          num_instances, seed, split, words_per_instance,
                          pool_size, tokenizer)


def make_reverse_task(num_instances: int, seed: int, split: str = "train",
                      words_per_instance: int = 3, pool_size: int = 20,
                      tokenizer: HashTokenizer | None = None) -> TaskSet:
    """Reverse the word sequence: 'reverse : a b c' -> 'c b a'."""
    return _sequence_task("reverse", "reverse", lambda ws: " ".join(reversed(ws)),
                          num_instances, seed, split, words_per_instance,
                          pool_size, tokenizer)


def make_compose_task(num_instances: int, seed: int, split: str = "train",
                      words_per_instance: int = 3, pool_size: int = 20,
                      tokenizer: HashTokenizer | None = None) -> TaskSet:
    """Both instructions at once: 'copy reverse : a b c' -> 'a b c c b a'."""
    return _sequence_task(
        "compose", "copy reverse",
        lambda ws: " ".join(ws) + " " + " ".join(reversed(ws)),
        num_instances, seed, split, words_per_instance, pool_size, tokenizer)


def make_copy_token_task(num_instances: int, seed: int, split: str = "train",
                         pool_size: int = 20, num_choices: int = 4,
                         tokenizer: HashTokenizer | None = None) -> TaskSet:
    """Single-token copying rendered as rank classification.

    Each instance asks for the shown word back; the choices are the true word
    plus distractors from the same pool, so an expert only has to prefer the
    word it just saw.
    """
    tokenizer = tokenizer or HashTokenizer()
    if num_choices > pool_size:
        raise ValueError("num_choices cannot exceed pool_size")
    pool = _word_pool(seed, pool_size, tokenizer)
    rng = np.random.default_rng(
        np.random.SeedSequence([seed, 131, _SPLIT_INDEX[split]])
    )
    instances = []
    for k in range(num_instances):
        picks = rng.choice(len(pool), size=num_choices, replace=False)
        choices = [pool[int(i)] for i in picks]
        target = choices[int(rng.integers(num_choices))]
        instances.append(TaskInstance(
            instance_id=f"copytoken-{split}-{k:04d}",
            prompted_input=f"copy : {target}",
            answer_choices=tuple(sorted(choices)),
            target=target,
        ))
    return TaskSet(name="copytoken", instances=tuple(instances), split=split)
