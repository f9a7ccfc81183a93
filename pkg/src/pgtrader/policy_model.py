"""Decoder-style transformer policy with frozen/trainable/LoRA parameter split.

Token ids are embedded (learned token + position embeddings), passed
through N frozen then M trainable causal self-attention blocks, and the
final position's hidden state feeds a 3-way policy head (masked softmax
over Sell/Hold/Buy) and a scalar value head. Gradients come from the
in-package reverse-mode engine in :mod:`pgtrader.autodiff`; frozen
parameters never receive gradients.

Batched inputs are left-padded so the decision-relevant tail stays at
the final position; position ids count from the first real token.
"""

from __future__ import annotations

import copy
import dataclasses
import functools
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, layer_norm, log_softmax, softmax
from .errors import BoundsError, CompatibilityError, ConfigError, ValidationError
from .text_state import PAD_ID, VOCAB_SIZE, TokenSeq
from .trading_env import Action

NEG_BIAS = -1e30

LAYER_FIELDS = ("w_q", "w_k", "w_v", "w_o", "w_ff1", "w_ff2",
                "ln1_g", "ln1_b", "ln2_g", "ln2_b")
LORA_TARGETS_ALL = ("w_q", "w_k", "w_v", "w_o", "w_ff1", "w_ff2")

# Parameter groups; "frozen" is never updated or differentiated.
GROUPS = ("frozen", "train", "lora", "policy_head", "value_head")
BACKBONE_GROUPS = ("train", "lora")
HEAD_GROUPS = ("policy_head", "value_head")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = VOCAB_SIZE
    d_model: int = 16
    n_layers: int = 2
    n_heads: int = 2
    d_ff: int = 32
    max_seq_len: int = 512
    n_frozen: int = 1
    n_trainable: int = 1
    lora_rank: int = 2
    lora_enabled: bool = False
    lora_targets: tuple[str, ...] = ("w_q", "w_v")
    norm_scheme: str = "pre"

    def __post_init__(self):
        if self.n_frozen + self.n_trainable != self.n_layers:
            raise ConfigError(
                f"n_frozen + n_trainable must equal n_layers "
                f"({self.n_frozen}+{self.n_trainable} != {self.n_layers})"
            )
        if self.n_frozen < 0 or self.n_trainable < 0 or self.n_layers < 1:
            raise ConfigError("layer counts must be non-negative with n_layers >= 1")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model must be divisible by n_heads ({self.d_model} % {self.n_heads})"
            )
        if self.vocab_size < VOCAB_SIZE:
            raise ConfigError(f"vocab_size must cover the byte vocabulary ({VOCAB_SIZE})")
        if self.lora_enabled and self.lora_rank < 1:
            raise ConfigError("lora_rank must be >= 1 when LoRA is enabled")
        bad = set(self.lora_targets) - set(LORA_TARGETS_ALL)
        if bad:
            raise ConfigError(f"unknown LoRA targets: {sorted(bad)}")
        if self.norm_scheme not in ("pre", "post"):
            raise ConfigError(f"norm_scheme must be 'pre' or 'post', got {self.norm_scheme!r}")
        if self.max_seq_len < 1 or self.d_ff < 1:
            raise ConfigError("max_seq_len and d_ff must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lora_targets"] = list(self.lora_targets)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["lora_targets"] = tuple(d.get("lora_targets", ("w_q", "w_v")))
        return cls(**d)


@dataclass
class LayerWeights:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    w_ff1: np.ndarray
    w_ff2: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray


@dataclass
class LoraPair:
    layer: int
    target: str
    a: np.ndarray
    b: np.ndarray


@dataclass
class ParameterStore:
    config: ModelConfig
    tok_embedding: np.ndarray
    pos_embedding: np.ndarray
    frozen_layers: list[LayerWeights]
    trainable_layers: list[LayerWeights]
    lora: list[LoraPair]
    policy_w: np.ndarray
    policy_b: np.ndarray
    value_w: np.ndarray
    value_b: np.ndarray


@dataclass(frozen=True)
class PolicyOutput:
    logits: np.ndarray
    masked_probs: np.ndarray
    value: float
    log_probs: np.ndarray
    legal: np.ndarray

    def log_prob(self, action: Action) -> float:
        return float(self.log_probs[action.index])


def named_params(store: ParameterStore) -> dict[str, np.ndarray]:
    """Flat, deterministically ordered name -> array view of the store.

    Names are prefixed by parameter group: frozen.*, train.*, lora.*,
    policy_head.*, value_head.*.
    """
    out: dict[str, np.ndarray] = {
        "frozen.embedding.tok": store.tok_embedding,
        "frozen.embedding.pos": store.pos_embedding,
    }
    n_frozen = store.config.n_frozen
    for i, lw in enumerate(store.frozen_layers):
        for f in LAYER_FIELDS:
            out[f"frozen.layer{i}.{f}"] = getattr(lw, f)
    for j, lw in enumerate(store.trainable_layers):
        i = n_frozen + j
        for f in LAYER_FIELDS:
            out[f"train.layer{i}.{f}"] = getattr(lw, f)
    for pair in store.lora:
        out[f"lora.layer{pair.layer}.{pair.target}.a"] = pair.a
        out[f"lora.layer{pair.layer}.{pair.target}.b"] = pair.b
    out["policy_head.w"] = store.policy_w
    out["policy_head.b"] = store.policy_b
    out["value_head.w"] = store.value_w
    out["value_head.b"] = store.value_b
    return out


def group_of(name: str) -> str:
    return name.split(".", 1)[0]


def copy_store(store: ParameterStore) -> ParameterStore:
    return copy.deepcopy(store)


def _init_layer(rng: np.random.Generator, cfg: ModelConfig) -> LayerWeights:
    d, d_ff = cfg.d_model, cfg.d_ff
    s = d ** -0.5
    return LayerWeights(
        w_q=rng.normal(0.0, s, (d, d)),
        w_k=rng.normal(0.0, s, (d, d)),
        w_v=rng.normal(0.0, s, (d, d)),
        w_o=rng.normal(0.0, s, (d, d)),
        w_ff1=rng.normal(0.0, s, (d, d_ff)),
        w_ff2=rng.normal(0.0, d_ff ** -0.5, (d_ff, d)),
        ln1_g=np.ones(d),
        ln1_b=np.zeros(d),
        ln2_g=np.ones(d),
        ln2_b=np.zeros(d),
    )


def _base_shape(cfg: ModelConfig, target: str) -> tuple[int, int]:
    d, d_ff = cfg.d_model, cfg.d_ff
    return {"w_q": (d, d), "w_k": (d, d), "w_v": (d, d), "w_o": (d, d),
            "w_ff1": (d, d_ff), "w_ff2": (d_ff, d)}[target]


def init_params(config: ModelConfig, seed: int) -> ParameterStore:
    """Deterministic initialization; LoRA B starts at zero (identity delta).

    Base weights are drawn before any LoRA factors, so enabling LoRA
    does not perturb the base model produced by a given seed. Both heads
    start at zero: the initial policy is exactly uniform over legal
    actions and the initial value is 0, so early advantage estimates
    carry no head-initialization noise.
    """
    rng = np.random.default_rng(seed)
    d = config.d_model
    tok = rng.normal(0.0, 0.02, (config.vocab_size, d))
    pos = rng.normal(0.0, 0.02, (config.max_seq_len, d))
    frozen = [_init_layer(rng, config) for _ in range(config.n_frozen)]
    trainable = [_init_layer(rng, config) for _ in range(config.n_trainable)]
    policy_w = np.zeros((d, len(Action)))
    value_w = np.zeros((d, 1))
    lora: list[LoraPair] = []
    if config.lora_enabled:
        for layer in range(config.n_layers):
            for target in config.lora_targets:
                d_in, d_out = _base_shape(config, target)
                lora.append(
                    LoraPair(
                        layer=layer,
                        target=target,
                        a=rng.normal(0.0, d_in ** -0.5, (d_in, config.lora_rank)),
                        b=np.zeros((config.lora_rank, d_out)),
                    )
                )
    return ParameterStore(
        config=config,
        tok_embedding=tok,
        pos_embedding=pos,
        frozen_layers=frozen,
        trainable_layers=trainable,
        lora=lora,
        policy_w=policy_w,
        policy_b=np.zeros(len(Action)),
        value_w=value_w,
        value_b=np.zeros(1),
    )


def apply_lora(base: LayerWeights, pairs: list[LoraPair]) -> LayerWeights:
    """Effective layer weights: base + a @ b for each targeted matrix."""
    eff = dataclasses.replace(base)
    for pair in pairs:
        if pair.target not in LORA_TARGETS_ALL:
            raise ConfigError(f"unknown LoRA target {pair.target!r}")
        w = getattr(base, pair.target)
        if pair.a.shape[0] != w.shape[0] or pair.b.shape[1] != w.shape[1] \
                or pair.a.shape[1] != pair.b.shape[0]:
            raise ConfigError(
                f"LoRA pair shapes {pair.a.shape}x{pair.b.shape} do not match "
                f"base {pair.target} {w.shape}"
            )
        setattr(eff, pair.target, w + pair.a @ pair.b)
    return eff


# ----------------------------------------------------------------------
# forward graph


@dataclass
class ModelGraph:
    """One recorded forward pass over a (left-padded) token batch."""

    tensors: dict[str, Tensor]
    raw_logits: Tensor
    masked_logits: Tensor
    log_probs: Tensor
    values: Tensor
    hidden: Tensor


def build_param_tensors(store: ParameterStore, grad_groups: frozenset[str] | None) -> dict[str, Tensor]:
    groups = grad_groups or frozenset()
    tensors = {}
    for name, arr in named_params(store).items():
        g = group_of(name)
        tensors[name] = Tensor(arr, requires_grad=(g in groups and g != "frozen"))
    return tensors


@functools.lru_cache(maxsize=64)
def _attn_bias_cached(n: int, pad_lens: tuple[int, ...]) -> np.ndarray:
    idx = np.arange(n)
    pads = np.asarray(pad_lens)
    causal = idx[None, :] <= idx[:, None]
    visible = idx[None, None, None, :] >= pads[:, None, None, None]
    allowed = causal[None, None, :, :] & visible
    return np.where(allowed, 0.0, NEG_BIAS)


def _attn_bias(n: int, pad_lens: np.ndarray) -> np.ndarray:
    return _attn_bias_cached(n, tuple(int(p) for p in pad_lens))


def _effective_layer(tensors: dict[str, Tensor], cfg: ModelConfig, layer: int) -> dict[str, Tensor]:
    prefix = f"frozen.layer{layer}." if layer < cfg.n_frozen else f"train.layer{layer}."
    eff = {f: tensors[prefix + f] for f in LAYER_FIELDS}
    if cfg.lora_enabled:
        for target in cfg.lora_targets:
            a = tensors.get(f"lora.layer{layer}.{target}.a")
            b = tensors.get(f"lora.layer{layer}.{target}.b")
            if a is not None and b is not None:
                eff[target] = eff[target] + a @ b
    return eff


def _attention(x: Tensor, lt: dict[str, Tensor], n_heads: int, bias: Tensor) -> Tensor:
    b_sz, n, d = x.shape
    dh = d // n_heads

    def heads(t: Tensor) -> Tensor:
        return t.reshape(b_sz, n, n_heads, dh).transpose(0, 2, 1, 3)

    q, k, v = heads(x @ lt["w_q"]), heads(x @ lt["w_k"]), heads(x @ lt["w_v"])
    scores = (q @ k.swapaxes(-1, -2)) * (dh ** -0.5) + bias
    attn = softmax(scores, axis=-1)
    out = (attn @ v).transpose(0, 2, 1, 3).reshape(b_sz, n, d)
    return out @ lt["w_o"]


def _ffn(x: Tensor, lt: dict[str, Tensor]) -> Tensor:
    return (x @ lt["w_ff1"]).tanh() @ lt["w_ff2"]


def _block(x: Tensor, lt: dict[str, Tensor], cfg: ModelConfig, bias: Tensor) -> Tensor:
    if cfg.norm_scheme == "pre":
        x = x + _attention(layer_norm(x, lt["ln1_g"], lt["ln1_b"]), lt, cfg.n_heads, bias)
        x = x + _ffn(layer_norm(x, lt["ln2_g"], lt["ln2_b"]), lt)
    else:
        x = layer_norm(x + _attention(x, lt, cfg.n_heads, bias), lt["ln1_g"], lt["ln1_b"])
        x = layer_norm(x + _ffn(x, lt), lt["ln2_g"], lt["ln2_b"])
    return x


def run_model(
    store: ParameterStore,
    token_batch: np.ndarray,
    pad_lens: np.ndarray,
    legal_batch: np.ndarray,
    grad_groups: frozenset[str] | None = None,
) -> ModelGraph:
    """Forward a left-padded (B, n) int batch through the full network.

    ``pad_lens[b]`` counts leading pad tokens in row b; position ids and
    attention both start at the first real token. ``legal_batch`` is a
    (B, 3) bool mask; illegal actions end up with probability exactly 0.
    """
    cfg = store.config
    token_batch = np.asarray(token_batch, dtype=np.int64)
    b_sz, n = token_batch.shape
    if n > cfg.max_seq_len:
        raise BoundsError(f"sequence length {n} exceeds max_seq_len {cfg.max_seq_len}")
    if not legal_batch.any(axis=1).all():
        raise ValidationError("every sample needs at least one legal action")

    tensors = build_param_tensors(store, grad_groups)
    pos_ids = np.maximum(np.arange(n)[None, :] - pad_lens[:, None], 0)
    x = tensors["frozen.embedding.tok"][token_batch] + tensors["frozen.embedding.pos"][pos_ids]
    bias = Tensor(_attn_bias(n, pad_lens))
    for layer in range(cfg.n_layers):
        x = _block(x, _effective_layer(tensors, cfg, layer), cfg, bias)

    pooled = x[:, -1, :]
    logits = pooled @ tensors["policy_head.w"] + tensors["policy_head.b"]
    legal_bias = Tensor(np.where(legal_batch, 0.0, NEG_BIAS))
    masked_logits = logits + legal_bias
    log_probs = log_softmax(masked_logits, axis=-1)
    values = (pooled @ tensors["value_head.w"] + tensors["value_head.b"])[:, 0]
    return ModelGraph(
        tensors=tensors,
        raw_logits=logits,
        masked_logits=masked_logits,
        log_probs=log_probs,
        values=values,
        hidden=x,
    )


def forward(
    store: ParameterStore,
    tokens: TokenSeq | np.ndarray,
    legal: np.ndarray,
) -> PolicyOutput:
    """Single-sample inference; no gradients recorded."""
    ids = tokens.array() if isinstance(tokens, TokenSeq) else np.asarray(tokens, dtype=np.int64)
    legal = np.asarray(legal, dtype=bool)
    if not legal.any():
        raise ValidationError("legal action mask is empty")
    graph = run_model(store, ids[None, :], np.zeros(1, dtype=np.int64), legal[None, :])
    log_probs = graph.log_probs.data[0]
    probs = np.where(legal, np.exp(log_probs), 0.0)
    return PolicyOutput(
        logits=graph.raw_logits.data[0],
        masked_probs=probs,
        value=float(graph.values.data[0]),
        log_probs=log_probs,
        legal=legal,
    )


def sample_action(
    output: PolicyOutput,
    rng: np.random.Generator | None = None,
    mode: str = "sample",
) -> tuple[Action, float]:
    """Draw from the masked distribution, or take the argmax in greedy mode.

    Greedy ties break toward the lowest action code (Sell < Hold < Buy).
    """
    probs = output.masked_probs
    if mode == "greedy":
        idx = int(np.argmax(probs))
    elif mode == "sample":
        if rng is None:
            raise ConfigError("sample mode needs an rng")
        cum = np.cumsum(probs)
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        idx = min(idx, len(probs) - 1)
        if not output.legal[idx]:
            idx = int(np.argmax(probs))
    else:
        raise ConfigError(f"unknown sampling mode {mode!r}")
    return Action.from_index(idx), float(output.log_probs[idx])


def collect_grads(graph: ModelGraph) -> dict[str, np.ndarray]:
    """Gradients per parameter after backward; frozen entries report zero."""
    grads = {}
    for name, t in graph.tensors.items():
        grads[name] = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
    return grads


def backward(graph: ModelGraph, loss: Tensor) -> dict[str, np.ndarray]:
    """Run reverse-mode on a recorded graph and collect per-parameter grads."""
    loss.backward()
    return collect_grads(graph)


# ----------------------------------------------------------------------
# checkpoints

_MAGIC = b"PGTCKPT1"


def save_checkpoint(path: str, store: ParameterStore, step: int = 0) -> None:
    """Versioned binary blob: config + every parameter group + step counter."""
    params = named_params(store)
    header = {
        "version": 1,
        "config": store.config.to_dict(),
        "step": int(step),
        "params": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def load_checkpoint(path: str) -> tuple[ParameterStore, int]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise CompatibilityError(f"not a checkpoint file: {path!r}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != 1:
            raise CompatibilityError(f"unsupported checkpoint version {header.get('version')}")
        config = ModelConfig.from_dict(header["config"])
        arrays: dict[str, np.ndarray] = {}
        for meta in header["params"]:
            shape = tuple(meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            arrays[meta["name"]] = np.frombuffer(buf, dtype=np.float64).reshape(shape).copy()
    store = _store_from_named(config, arrays)
    return store, int(header["step"])


def _store_from_named(config: ModelConfig, arrays: dict[str, np.ndarray]) -> ParameterStore:
    def layer(i: int, prefix: str) -> LayerWeights:
        return LayerWeights(**{f: arrays[f"{prefix}.layer{i}.{f}"] for f in LAYER_FIELDS})

    lora: list[LoraPair] = []
    if config.lora_enabled:
        for i in range(config.n_layers):
            for target in config.lora_targets:
                lora.append(
                    LoraPair(
                        layer=i,
                        target=target,
                        a=arrays[f"lora.layer{i}.{target}.a"],
                        b=arrays[f"lora.layer{i}.{target}.b"],
                    )
                )
    return ParameterStore(
        config=config,
        tok_embedding=arrays["frozen.embedding.tok"],
        pos_embedding=arrays["frozen.embedding.pos"],
        frozen_layers=[layer(i, "frozen") for i in range(config.n_frozen)],
        trainable_layers=[
            layer(config.n_frozen + j, "train") for j in range(config.n_trainable)
        ],
        lora=lora,
        policy_w=arrays["policy_head.w"],
        policy_b=arrays["policy_head.b"],
        value_w=arrays["value_head.w"],
        value_b=arrays["value_head.b"],
    )


__all__ = [
    "ModelConfig",
    "LayerWeights",
    "LoraPair",
    "ParameterStore",
    "PolicyOutput",
    "ModelGraph",
    "named_params",
    "group_of",
    "copy_store",
    "init_params",
    "apply_lora",
    "run_model",
    "forward",
    "sample_action",
    "backward",
    "collect_grads",
    "build_param_tensors",
    "save_checkpoint",
    "load_checkpoint",
    "GROUPS",
    "BACKBONE_GROUPS",
    "HEAD_GROUPS",
    "NEG_BIAS",
    "LORA_TARGETS_ALL",
]
