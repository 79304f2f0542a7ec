"""Toy decoder-only transformer: forward, scoring, adapters, training.

Each layer applies residual self-attention followed by a residual
feed-forward block,

    u = SelfAtt(h) + h
    h' = FFN(u) + u

and an expert adapter adds a parallel bottleneck branch to the same block,
h' = FFN_e(u) + FFN(u) + u, where FFN_e = up(relu(down(u))). The adapter
up-projection is zero-initialized so an untrained adapter is an exact
identity. There is no normalization layer and no dropout. Parameters are
stored float32; all forward/backward arithmetic runs in float64, which keeps
central-difference gradient checks meaningful.

Weights never change during scoring or decoding; training mutates only its
own float64 working copy and returns a fresh ParameterSet.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .params import ParameterSet
from .tasks import TaskSet
from .tokenizer import EOS_ID, HashTokenizer, TokenSequence

logger = logging.getLogger(__name__)

CONFIG_KEY = "config"
ADAPTER_PREFIX = "adapter."


class ShapeMismatchError(ValueError):
    """Parameters or token ids do not match the model configuration."""


class AdapterShapeMismatchError(ValueError):
    """Adapter tensors do not match the model configuration."""


class SequenceTooLongError(ValueError):
    """Token sequence exceeds the model's maximum length."""


class EmptyTargetError(ValueError):
    """Scoring requires a nonempty target segment."""


class EmptyTaskError(ValueError):
    """Training requires a nonempty task."""


@dataclass(frozen=True)
class ModelConfig:
    """Sizes of the toy model; stored inside every parameter file."""

    num_layers: int = 2
    hidden_dim: int = 64
    adapter_dim: int = 8
    num_heads: int = 4
    vocab_size: int = 512
    max_tokens: int = 64

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if not 1 <= self.adapter_dim < self.hidden_dim:
            raise ValueError("adapter_dim must satisfy 1 <= e < hidden_dim")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError("num_heads must divide hidden_dim")
        if self.vocab_size < 3:
            raise ValueError("vocab_size must be >= 3 (two reserved ids)")
        if self.max_tokens < 2:
            raise ValueError("max_tokens must be >= 2")

    def to_tensor(self) -> np.ndarray:
        return np.array(
            [self.num_layers, self.hidden_dim, self.adapter_dim,
             self.num_heads, self.vocab_size, self.max_tokens],
            dtype=np.float32,
        )

    @classmethod
    def from_tensor(cls, tensor: np.ndarray) -> "ModelConfig":
        if tensor.shape != (6,):
            raise ShapeMismatchError(f"config tensor must have shape (6,), got {tensor.shape}")
        vals = [int(v) for v in tensor]
        return cls(*vals)


def base_schema(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, v, t = config.hidden_dim, config.vocab_size, config.max_tokens
    schema: dict[str, tuple[int, ...]] = {
        CONFIG_KEY: (6,),
        "tok_emb": (v, d),
        "pos_emb": (t, d),
    }
    for i in range(config.num_layers):
        for name in ("wq", "wk", "wv", "wo"):
            schema[f"layers.{i}.attn.{name}"] = (d, d)
        schema[f"layers.{i}.ffn.w1"] = (d, d)
        schema[f"layers.{i}.ffn.b1"] = (d,)
        schema[f"layers.{i}.ffn.w2"] = (d, d)
        schema[f"layers.{i}.ffn.b2"] = (d,)
    schema["out_proj"] = (d, v)
    return schema


def adapter_schema(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, e = config.hidden_dim, config.adapter_dim
    schema: dict[str, tuple[int, ...]] = {}
    for i in range(config.num_layers):
        schema[f"{ADAPTER_PREFIX}layers.{i}.down"] = (d, e)
        schema[f"{ADAPTER_PREFIX}layers.{i}.down_bias"] = (e,)
        schema[f"{ADAPTER_PREFIX}layers.{i}.up"] = (e, d)
        schema[f"{ADAPTER_PREFIX}layers.{i}.up_bias"] = (d,)
    return schema


def init_params(config: ModelConfig, seed: int) -> ParameterSet:
    """Random base model; scale 1/sqrt(d) keeps activations O(1) without norms."""
    rng = np.random.default_rng(seed)
    scale = 1.0 / math.sqrt(config.hidden_dim)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in base_schema(config).items():
        if name == CONFIG_KEY:
            tensors[name] = config.to_tensor()
        elif name.endswith((".b1", ".b2")):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            tensors[name] = rng.normal(0.0, scale, shape).astype(np.float32)
    return ParameterSet(tensors)


def init_adapter(config: ModelConfig, seed: int) -> ParameterSet:
    """Zero up-projection, uniform +-1/sqrt(d) down-projection, zero biases."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(config.hidden_dim)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in adapter_schema(config).items():
        if name.endswith(".down"):
            tensors[name] = rng.uniform(-bound, bound, shape).astype(np.float32)
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    return ParameterSet(tensors)


def config_from_params(params: Mapping[str, np.ndarray]) -> ModelConfig:
    if CONFIG_KEY not in params:
        raise ShapeMismatchError("parameter set lacks a 'config' tensor")
    return ModelConfig.from_tensor(np.asarray(params[CONFIG_KEY]))


def validate_base(params: ParameterSet) -> ModelConfig:
    config = config_from_params(params)
    expected = base_schema(config)
    actual = {name: params[name].shape for name in params}
    if actual != expected:
        raise ShapeMismatchError(
            f"base schema mismatch: expected {sorted(expected)}, got {sorted(actual)}"
        )
    return config


def validate_adapter(adapter: ParameterSet, config: ModelConfig) -> None:
    expected = adapter_schema(config)
    actual = {name: adapter[name].shape for name in adapter}
    if actual != expected:
        raise AdapterShapeMismatchError(
            f"adapter schema mismatch: expected {sorted(expected)}, got {sorted(actual)}"
        )


def _weights64(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {
        name: np.asarray(arr, dtype=np.float64)
        for name, arr in params.items()
        if name != CONFIG_KEY
    }


def _check_tokens(config: ModelConfig, tokens: TokenSequence) -> np.ndarray:
    if len(tokens) == 0:
        raise ShapeMismatchError("token sequence must be nonempty")
    if len(tokens) > config.max_tokens:
        raise SequenceTooLongError(
            f"sequence of {len(tokens)} tokens exceeds max_tokens={config.max_tokens}"
        )
    ids = np.asarray(tokens.ids, dtype=np.intp)
    if ids.max() >= config.vocab_size:
        raise ShapeMismatchError(
            f"token id {int(ids.max())} outside vocab of size {config.vocab_size}"
        )
    return ids


class _LayerCache:
    __slots__ = ("h_in", "q", "k", "v", "p", "merged", "u", "z1", "r", "za", "ra")

    def __init__(self, **kw):
        for name, value in kw.items():
            setattr(self, name, value)


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    length, dim = x.shape
    return x.reshape(length, num_heads, dim // num_heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    num_heads, length, head_dim = x.shape
    return x.transpose(1, 0, 2).reshape(length, num_heads * head_dim)


def _forward(
    weights: dict[str, np.ndarray],
    adapter: dict[str, np.ndarray] | None,
    ids: np.ndarray,
    config: ModelConfig,
    want_cache: bool = False,
):
    """Run the stack; returns (logits, per-layer caches, per-layer outputs)."""
    length = len(ids)
    num_heads = config.num_heads
    scale = 1.0 / math.sqrt(config.hidden_dim // num_heads)
    mask = np.triu(np.full((length, length), -np.inf), k=1)

    h = weights["tok_emb"][ids] + weights["pos_emb"][:length]
    caches: list[_LayerCache] = []
    hiddens = [h]
    for i in range(config.num_layers):
        at = f"layers.{i}.attn"
        q = _split_heads(h @ weights[f"{at}.wq"], num_heads)
        k = _split_heads(h @ weights[f"{at}.wk"], num_heads)
        v = _split_heads(h @ weights[f"{at}.wv"], num_heads)
        p = _softmax(q @ k.transpose(0, 2, 1) * scale + mask)
        merged = _merge_heads(p @ v)
        u = merged @ weights[f"{at}.wo"] + h

        ff = f"layers.{i}.ffn"
        z1 = u @ weights[f"{ff}.w1"] + weights[f"{ff}.b1"]
        r = np.maximum(z1, 0.0)
        h_out = r @ weights[f"{ff}.w2"] + weights[f"{ff}.b2"] + u

        za = ra = None
        if adapter is not None:
            ad = f"{ADAPTER_PREFIX}layers.{i}"
            za = u @ adapter[f"{ad}.down"] + adapter[f"{ad}.down_bias"]
            ra = np.maximum(za, 0.0)
            h_out = h_out + (ra @ adapter[f"{ad}.up"] + adapter[f"{ad}.up_bias"])

        if want_cache:
            caches.append(_LayerCache(h_in=h, q=q, k=k, v=v, p=p, merged=merged,
                                      u=u, z1=z1, r=r, za=za, ra=ra))
        h = h_out
        hiddens.append(h)
    logits = h @ weights["out_proj"]
    return logits, caches, hiddens


def _backward(
    weights: dict[str, np.ndarray],
    adapter: dict[str, np.ndarray] | None,
    config: ModelConfig,
    ids: np.ndarray,
    caches: list[_LayerCache],
    h_final: np.ndarray,
    dlogits: np.ndarray,
    train_base: bool,
) -> dict[str, np.ndarray]:
    """Gradients of the summed target NLL w.r.t. adapter and/or base tensors."""
    num_heads = config.num_heads
    scale = 1.0 / math.sqrt(config.hidden_dim // num_heads)
    grads: dict[str, np.ndarray] = {}

    if train_base:
        grads["out_proj"] = h_final.T @ dlogits
    dh = dlogits @ weights["out_proj"].T

    for i in reversed(range(config.num_layers)):
        c = caches[i]
        du = dh.copy()

        if adapter is not None:
            ad = f"{ADAPTER_PREFIX}layers.{i}"
            grads[f"{ad}.up"] = c.ra.T @ dh
            grads[f"{ad}.up_bias"] = dh.sum(axis=0)
            dza = (dh @ adapter[f"{ad}.up"].T) * (c.za > 0.0)
            grads[f"{ad}.down"] = c.u.T @ dza
            grads[f"{ad}.down_bias"] = dza.sum(axis=0)
            du += dza @ adapter[f"{ad}.down"].T

        ff = f"layers.{i}.ffn"
        dz1 = (dh @ weights[f"{ff}.w2"].T) * (c.z1 > 0.0)
        if train_base:
            grads[f"{ff}.w2"] = c.r.T @ dh
            grads[f"{ff}.b2"] = dh.sum(axis=0)
            grads[f"{ff}.w1"] = c.u.T @ dz1
            grads[f"{ff}.b1"] = dz1.sum(axis=0)
        du += dz1 @ weights[f"{ff}.w1"].T

        at = f"layers.{i}.attn"
        dmerged = du @ weights[f"{at}.wo"].T
        if train_base:
            grads[f"{at}.wo"] = c.merged.T @ du
        da = _split_heads(dmerged, num_heads)
        dp = da @ c.v.transpose(0, 2, 1)
        dv = c.p.transpose(0, 2, 1) @ da
        ds = c.p * (dp - (dp * c.p).sum(axis=-1, keepdims=True))
        dq = (ds @ c.k) * scale
        dk = (ds.transpose(0, 2, 1) @ c.q) * scale
        dq2, dk2, dv2 = (_merge_heads(x) for x in (dq, dk, dv))
        if train_base:
            grads[f"{at}.wq"] = c.h_in.T @ dq2
            grads[f"{at}.wk"] = c.h_in.T @ dk2
            grads[f"{at}.wv"] = c.h_in.T @ dv2
        dh = du + dq2 @ weights[f"{at}.wq"].T + dk2 @ weights[f"{at}.wk"].T \
            + dv2 @ weights[f"{at}.wv"].T

    if train_base:
        dtok = np.zeros_like(weights["tok_emb"])
        np.add.at(dtok, ids, dh)
        grads["tok_emb"] = dtok
        dpos = np.zeros_like(weights["pos_emb"])
        dpos[: len(ids)] = dh
        grads["pos_emb"] = dpos
    return grads


def _target_loss(logits: np.ndarray, ids: np.ndarray, boundary: int):
    """Summed NLL of the target segment and its gradient w.r.t. the logits."""
    length = len(ids)
    rows = np.arange(boundary - 1, length - 1)
    targets = ids[boundary:]
    sub = logits[rows]
    max_ = sub.max(axis=1, keepdims=True)
    lse = max_ + np.log(np.exp(sub - max_).sum(axis=1, keepdims=True))
    logp = sub - lse
    loss = -float(logp[np.arange(len(rows)), targets].sum())
    dlogits = np.zeros_like(logits)
    dsub = np.exp(logp)
    dsub[np.arange(len(rows)), targets] -= 1.0
    dlogits[rows] = dsub
    return loss, dlogits


def _check_boundary(tokens: TokenSequence) -> None:
    if tokens.segment_boundary >= len(tokens):
        raise EmptyTargetError("target segment is empty")
    if tokens.segment_boundary < 1:
        raise ValueError(
            "segment_boundary must be >= 1; encode empty inputs with the UNK anchor"
        )


class CachedModel:
    """Validated float64 weight cache for repeated scoring and decoding.

    The public module functions re-validate and re-cast parameters on every
    call; evaluation loops touch thousands of sequences, so they go through
    one of these instead.
    """

    def __init__(self, params: ParameterSet, adapter: ParameterSet | None = None):
        self.config = validate_base(params)
        self.weights = _weights64(params)
        self.adapter = None
        if adapter is not None:
            validate_adapter(adapter, self.config)
            self.adapter = _weights64(adapter)

    def _ids(self, tokens: TokenSequence) -> np.ndarray:
        return _check_tokens(self.config, tokens)

    def logits(self, tokens: TokenSequence) -> np.ndarray:
        out, _, _ = _forward(self.weights, self.adapter, self._ids(tokens), self.config)
        return out

    def target_log_likelihood(self, tokens: TokenSequence) -> float:
        ids = self._ids(tokens)
        _check_boundary(tokens)
        logits, _, _ = _forward(self.weights, self.adapter, ids, self.config)
        loss, _ = _target_loss(logits, ids, tokens.segment_boundary)
        return -loss

    def greedy(self, prompt_ids: Sequence[int], max_len: int) -> tuple[int, ...]:
        if max_len < 0:
            raise ValueError("max_len must be >= 0")
        ids = [int(i) for i in prompt_ids]
        if not ids:
            raise ShapeMismatchError("prompt must be nonempty")
        if len(ids) >= self.config.max_tokens:
            raise SequenceTooLongError(
                f"prompt of {len(ids)} tokens leaves no room under "
                f"max_tokens={self.config.max_tokens}"
            )
        if max(ids) >= self.config.vocab_size or min(ids) < 0:
            raise ShapeMismatchError("prompt token id outside vocab")
        out: list[int] = []
        while len(out) < max_len and len(ids) < self.config.max_tokens:
            arr = np.asarray(ids, dtype=np.intp)
            logits, _, _ = _forward(self.weights, self.adapter, arr, self.config)
            nxt = int(np.argmax(logits[-1]))
            if nxt == EOS_ID:
                break
            out.append(nxt)
            ids.append(nxt)
        return tuple(out)


def forward_base(params: ParameterSet, tokens: TokenSequence) -> np.ndarray:
    """Logits (length x vocab) of the base model, float64."""
    config = validate_base(params)
    ids = _check_tokens(config, tokens)
    logits, _, _ = _forward(_weights64(params), None, ids, config)
    return logits


def forward_with_adapter(
    params: ParameterSet, adapter: ParameterSet, tokens: TokenSequence
) -> np.ndarray:
    """Logits of the base model plus the per-layer adapter branch."""
    config = validate_base(params)
    validate_adapter(adapter, config)
    ids = _check_tokens(config, tokens)
    logits, _, _ = _forward(_weights64(params), _weights64(adapter), ids, config)
    return logits


def hidden_states(
    params: ParameterSet, adapter: ParameterSet | None, tokens: TokenSequence
) -> list[np.ndarray]:
    """Per-layer outputs [embeddings, layer 1, ..., layer l], each length x d."""
    config = validate_base(params)
    a64 = None
    if adapter is not None:
        validate_adapter(adapter, config)
        a64 = _weights64(adapter)
    ids = _check_tokens(config, tokens)
    _, _, hiddens = _forward(_weights64(params), a64, ids, config)
    return hiddens


def log_likelihood(
    params: ParameterSet, adapter: ParameterSet | None, tokens: TokenSequence
) -> float:
    """Summed log-probability of the target segment given the input segment.

    No length normalization: multi-token targets add per-token log-probs.
    """
    return CachedModel(params, adapter).target_log_likelihood(tokens)


def loss_and_gradients(
    params: ParameterSet,
    adapter: ParameterSet | None,
    tokens: TokenSequence,
    train_base: bool = True,
) -> tuple[float, dict[str, np.ndarray]]:
    """Target-segment NLL and its gradients (adapter tensors, and base when
    train_base is set)."""
    config = validate_base(params)
    a64 = None
    if adapter is not None:
        validate_adapter(adapter, config)
        a64 = _weights64(adapter)
    ids = _check_tokens(config, tokens)
    _check_boundary(tokens)
    w64 = _weights64(params)
    logits, caches, hiddens = _forward(w64, a64, ids, config, want_cache=True)
    loss, dlogits = _target_loss(logits, ids, tokens.segment_boundary)
    grads = _backward(w64, a64, config, ids, caches, hiddens[-1], dlogits, train_base)
    return loss, grads


def finite_difference_check(
    params: ParameterSet,
    adapter: ParameterSet | None,
    tokens: TokenSequence,
    step: float = 1e-5,
    analytic: dict[str, np.ndarray] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error uses |a - n| / max(|a|, |n|, 1e-8), so an all-zero
    gradient pair scores 0. Passing ``analytic`` overrides the computed
    gradients (used to prove the check detects corruption).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    config = validate_base(params)
    if adapter is not None:
        validate_adapter(adapter, config)
    ids = _check_tokens(config, tokens)
    _check_boundary(tokens)
    if analytic is None:
        _, analytic = loss_and_gradients(params, adapter, tokens, train_base=True)

    w64 = _weights64(params)
    a64 = _weights64(adapter) if adapter is not None else None

    def loss_at() -> float:
        logits, _, _ = _forward(w64, a64, ids, config)
        loss, _ = _target_loss(logits, ids, tokens.segment_boundary)
        return loss

    max_err = 0.0
    for name, grad in analytic.items():
        store = a64 if name.startswith(ADAPTER_PREFIX) else w64
        tensor = store[name]
        flat = tensor.reshape(-1)
        gflat = np.asarray(grad, dtype=np.float64).reshape(-1)
        for j in range(flat.size):
            original = flat[j]
            flat[j] = original + step
            hi = loss_at()
            flat[j] = original - step
            lo = loss_at()
            flat[j] = original
            numeric = (hi - lo) / (2.0 * step)
            a = float(gflat[j])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if err > max_err:
                max_err = err
    return max_err


@dataclass(frozen=True)
class TrainConfig:
    """Plain SGD schedule: constant learning rate, per-instance steps."""

    sample_cap: int = 50000
    epochs: int = 5
    learning_rate: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.sample_cap < 1:
            raise ValueError("sample_cap must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def default_sample_cap(kind: str) -> int:
    """Per-task training pool cap: 50,000 classification, 10,000 generative."""
    return 50000 if kind == "classification" else 10000


def _sample_instances(task: TaskSet, cap: int, rng: np.random.Generator):
    if len(task) <= cap:
        return list(task.instances)
    picked = sorted(rng.choice(len(task), size=cap, replace=False).tolist())
    return [task[i] for i in picked]


def _sgd(
    trainable: dict[str, np.ndarray],
    frozen_base: dict[str, np.ndarray] | None,
    sequences: list[TokenSequence],
    config: ModelConfig,
    cfg: TrainConfig,
    rng: np.random.Generator,
    adapter_mode: bool,
    log: Callable[[str], None],
) -> None:
    """Run epochs of per-instance SGD, mutating ``trainable`` in place."""
    id_arrays = [np.asarray(seq.ids, dtype=np.intp) for seq in sequences]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(sequences))
        total = 0.0
        for idx in order:
            seq, ids = sequences[idx], id_arrays[idx]
            if adapter_mode:
                weights, adapter = frozen_base, trainable
            else:
                weights, adapter = trainable, None
            logits, caches, hiddens = _forward(weights, adapter, ids, config,
                                               want_cache=True)
            loss, dlogits = _target_loss(logits, ids, seq.segment_boundary)
            grads = _backward(weights, adapter, config, ids, caches, hiddens[-1],
                              dlogits, train_base=not adapter_mode)
            for name, grad in grads.items():
                trainable[name] -= cfg.learning_rate * grad
            total += loss
        log(f"epoch={epoch} loss={total / len(sequences)!r}")


def _prepare_training(base, task, cfg, tokenizer):
    config = validate_base(base)
    if len(task) == 0:
        raise EmptyTaskError(f"task {task.name!r} is empty")
    if tokenizer is None:
        tokenizer = HashTokenizer(vocab_size=config.vocab_size)
    seed_init, seed_data = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(seed_data)
    instances = _sample_instances(task, cfg.sample_cap, rng)
    sequences = [
        tokenizer.encode_instance(inst, config.max_tokens) for inst in instances
    ]
    return config, seed_init, rng, sequences


def train_pe(
    base: ParameterSet,
    task: TaskSet,
    cfg: TrainConfig,
    tokenizer: HashTokenizer | None = None,
    log: Callable[[str], None] | None = None,
) -> ParameterSet:
    """Train a prompt expert: adapter-only SGD against a frozen base.

    Returns the trained adapter ParameterSet; the base is never written to.
    """
    log = log if log is not None else (lambda line: logger.info("%s", line))
    config, seed_init, rng, sequences = _prepare_training(base, task, cfg, tokenizer)
    adapter = init_adapter(config, _seed_int(seed_init))
    trainable = _weights64(adapter)
    frozen = _weights64(base)
    _sgd(trainable, frozen, sequences, config, cfg, rng, adapter_mode=True, log=log)
    return ParameterSet({name: trainable[name].astype(np.float32) for name in adapter})


def train_de(
    base: ParameterSet,
    task: TaskSet,
    cfg: TrainConfig,
    tokenizer: HashTokenizer | None = None,
    log: Callable[[str], None] | None = None,
) -> ParameterSet:
    """Train a dataset expert: full fine-tune of every base tensor."""
    log = log if log is not None else (lambda line: logger.info("%s", line))
    config, _, rng, sequences = _prepare_training(base, task, cfg, tokenizer)
    trainable = _weights64(base)
    _sgd(trainable, None, sequences, config, cfg, rng, adapter_mode=False, log=log)
    tensors = {CONFIG_KEY: base[CONFIG_KEY]}
    tensors.update({name: trainable[name].astype(np.float32) for name in trainable})
    return ParameterSet(tensors)


def _seed_int(seed_seq: np.random.SeedSequence) -> int:
    return int(seed_seq.generate_state(1, dtype=np.uint64)[0])


def greedy_decode(
    params: ParameterSet,
    adapter: ParameterSet | None,
    prompt_ids: Sequence[int],
    max_len: int,
) -> tuple[int, ...]:
    """Append argmax tokens until end-of-sequence, max_len, or the length cap.

    The end-of-sequence token stops decoding and is not part of the result.
    """
    return CachedModel(params, adapter).greedy(prompt_ids, max_len)
