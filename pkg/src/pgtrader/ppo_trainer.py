"""Online PPO over the trading MDP with the text-state transformer policy.

One iteration collects ``num_steps`` transitions per environment stream
under the current policy, computes GAE advantages, then runs K epochs
of minibatched clipped-surrogate updates. Parameter groups update at
their own rates: heads on their own losses at ``lr_heads``, trainable
backbone layers and LoRA factors on the combined loss at
``lr_backbone``. Frozen parameters are never touched. The rollout
buffer is discarded after each iteration; nothing is reused.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError, NumericalError
from .market_data import MarketSeries
from .policy_model import (
    BACKBONE_GROUPS,
    ModelConfig,
    ParameterStore,
    copy_store,
    collect_grads,
    forward,
    group_of,
    init_params,
    named_params,
    run_model,
    sample_action,
)
from .text_state import PAD_ID, PromptTemplate, render_prompt, tokenize
from .trading_env import Action, TradingEnv, legal_mask

ADV_STD_EPS = 1e-8
TRAIN_GRAD_GROUPS = frozenset({"train", "lora", "policy_head", "value_head"})


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.95
    gae_lambda: float = 0.98
    clip_coef: float = 0.2
    ent_coef: float = 0.05
    vf_coef: float = 0.5
    kl_coef: float = 0.05
    lr_heads: float = 5e-4
    lr_backbone: float = 5e-4
    num_steps: int = 40
    num_envs: int = 1
    update_epochs: int = 1
    minibatch_size: int = 32
    max_grad_norm: float = 0.5
    anneal_lr: bool = True
    norm_adv: bool = True
    clip_vloss: bool = True
    total_timesteps: int = 13860
    target_kl: float | None = None
    gradient_accumulation_steps: int = 8
    max_episode_steps: int = 65
    optimizer: str = "sgd"

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.clip_coef <= 0.0:
            raise ConfigError(f"clip_coef must be positive, got {self.clip_coef}")
        if self.lr_heads <= 0.0 or self.lr_backbone <= 0.0:
            raise ConfigError("learning rates must be positive")
        if min(self.num_steps, self.num_envs, self.update_epochs,
               self.minibatch_size, self.gradient_accumulation_steps,
               self.max_episode_steps, self.total_timesteps) < 1:
            raise ConfigError("count-valued PPO settings must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PpoConfig":
        return cls(**d)


@dataclass
class Transition:
    state_tokens: np.ndarray
    action: Action
    reward: float
    next_state_tokens: np.ndarray
    log_prob_old: float
    value_old: float
    done: bool
    legal: np.ndarray


class RolloutBuffer:
    """Per-stream transition lists for one PPO iteration (on-policy)."""

    def __init__(self, num_envs: int, num_steps: int):
        self.capacity = num_envs * num_steps
        self.streams: list[list[Transition]] = [[] for _ in range(num_envs)]

    def flat(self) -> list[Transition]:
        return [t for stream in self.streams for t in stream]

    def __len__(self) -> int:
        return sum(len(s) for s in self.streams)

    def clear(self) -> None:
        for stream in self.streams:
            stream.clear()


@dataclass
class AdvantageBatch:
    advantages: np.ndarray
    returns: np.ndarray


class RolloutStream:
    """One environment stream plus its episode bookkeeping."""

    def __init__(self, env: TradingEnv, template: PromptTemplate, max_seq_len: int):
        self.env = env
        self.template = template
        self.max_seq_len = max_seq_len
        self.state, self.ledger = env.reset()
        self.episode_steps = 0

    def tokens(self, state) -> np.ndarray:
        prompt = render_prompt(state, self.template)
        return tokenize(prompt, self.max_seq_len).array()

    def reset(self) -> None:
        self.state, self.ledger = self.env.reset()
        self.episode_steps = 0


def make_streams(
    series: MarketSeries,
    model_cfg: ModelConfig,
    ppo_cfg: PpoConfig,
    initial_cash: float = 1000.0,
    template: PromptTemplate | None = None,
) -> list[RolloutStream]:
    template = template or PromptTemplate.default()
    return [
        RolloutStream(TradingEnv(series, initial_cash), template, model_cfg.max_seq_len)
        for _ in range(ppo_cfg.num_envs)
    ]


def collect_rollout(
    streams: list[RolloutStream],
    params: ParameterStore,
    cfg: PpoConfig,
    rng: np.random.Generator,
) -> RolloutBuffer:
    """Sample ``num_steps`` transitions per stream under the current policy.

    Episodes that end mid-rollout (test range exhausted or the
    max_episode_steps cap) reset their stream and keep collecting.
    """
    buffer = RolloutBuffer(len(streams), cfg.num_steps)
    for _ in range(cfg.num_steps):
        for i, stream in enumerate(streams):
            state = stream.state
            tokens = stream.tokens(state)
            legal = legal_mask(state)
            out = forward(params, tokens, legal)
            action, log_prob = sample_action(out, rng, mode="sample")
            outcome = stream.env.step(state, action, stream.ledger)
            stream.episode_steps += 1
            done = outcome.done or stream.episode_steps >= cfg.max_episode_steps
            buffer.streams[i].append(
                Transition(
                    state_tokens=tokens,
                    action=action,
                    reward=outcome.reward,
                    next_state_tokens=stream.tokens(outcome.next_state),
                    log_prob_old=log_prob,
                    value_old=out.value,
                    done=done,
                    legal=legal,
                )
            )
            if done:
                stream.reset()
            else:
                stream.state = outcome.next_state
    return buffer


def _state_value(params: ParameterStore, tokens: np.ndarray) -> float:
    # legal mask does not influence the value head; use all-legal
    out = forward(params, tokens, np.ones(len(Action), dtype=bool))
    return out.value


def compute_gae(
    buffer: RolloutBuffer, params: ParameterStore, cfg: PpoConfig
) -> AdvantageBatch:
    """Backward-recursion GAE with done masking and tail bootstrapping.

    A rollout truncated mid-episode bootstraps from the value of the
    final transition's next state; done transitions cut the bootstrap.
    Returns targets are R_t = A_t + V_old(s_t).
    """
    all_adv: list[np.ndarray] = []
    all_ret: list[np.ndarray] = []
    for stream in buffer.streams:
        n = len(stream)
        if n == 0:
            continue
        rewards = np.array([t.reward for t in stream])
        values = np.array([t.value_old for t in stream])
        dones = np.array([t.done for t in stream], dtype=np.float64)
        bootstrap = 0.0 if stream[-1].done else _state_value(params, stream[-1].next_state_tokens)
        adv = np.zeros(n)
        lastgaelam = 0.0
        for t in reversed(range(n)):
            nonterminal = 1.0 - dones[t]
            next_value = bootstrap if t == n - 1 else values[t + 1]
            delta = rewards[t] + cfg.gamma * next_value * nonterminal - values[t]
            lastgaelam = delta + cfg.gamma * cfg.gae_lambda * nonterminal * lastgaelam
            adv[t] = lastgaelam
        all_adv.append(adv)
        all_ret.append(adv + values)
    return AdvantageBatch(
        advantages=np.concatenate(all_adv), returns=np.concatenate(all_ret)
    )


def whiten(x: np.ndarray, eps: float = ADV_STD_EPS) -> np.ndarray:
    return (x - x.mean()) / (x.std() + eps)


@dataclass
class LossBundle:
    """Losses for one minibatch, with the graph still attached.

    ``policy_root`` collects the policy-side terms of the combined loss
    (-surrogate - c2*entropy + kl_coef*kl); ``value_root`` is the value
    loss alone. Backbone gradients combine the two as
    policy_root + vf_coef * value_root, which is the total loss.
    """

    policy_root: Tensor
    value_root: Tensor
    tensors: dict[str, Tensor]
    l_p: float
    l_v: float
    entropy: float
    kl: float
    l_total: float
    approx_kl: float


def _batch_arrays(batch: list[Transition]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    max_len = max(len(t.state_tokens) for t in batch)
    tokens = np.full((len(batch), max_len), PAD_ID, dtype=np.int64)
    pad_lens = np.zeros(len(batch), dtype=np.int64)
    legal = np.zeros((len(batch), len(Action)), dtype=bool)
    for i, t in enumerate(batch):
        pad = max_len - len(t.state_tokens)
        pad_lens[i] = pad
        tokens[i, pad:] = t.state_tokens
        legal[i] = t.legal
    return tokens, pad_lens, legal


def ppo_losses(
    batch: list[Transition],
    advantages: np.ndarray,
    returns: np.ndarray,
    params: ParameterStore,
    ref_params: ParameterStore,
    cfg: PpoConfig,
) -> LossBundle:
    """Clipped surrogate, (optionally clipped) value loss, entropy and
    reference-model KL for one minibatch, on a fresh forward pass."""
    tokens, pad_lens, legal = _batch_arrays(batch)
    act_idx = np.array([t.action.index for t in batch])
    lp_old = np.array([t.log_prob_old for t in batch])
    v_old = np.array([t.value_old for t in batch])

    adv = advantages
    if cfg.norm_adv and len(batch) >= 2:
        adv = whiten(adv)

    graph = run_model(params, tokens, pad_lens, legal, grad_groups=TRAIN_GRAD_GROUPS)
    ref_graph = run_model(ref_params, tokens, pad_lens, legal)

    lp_new = graph.log_probs[np.arange(len(batch)), act_idx]
    log_ratio = lp_new - lp_old
    ratio = log_ratio.exp()
    surr_unclipped = ratio * adv
    surr_clipped = ratio.clip(1.0 - cfg.clip_coef, 1.0 + cfg.clip_coef) * adv
    l_p = surr_unclipped.minimum(surr_clipped).mean()

    values = graph.values
    err_sq = (values - returns) ** 2.0
    if cfg.clip_vloss:
        v_clipped = v_old + (values - v_old).clip(-cfg.clip_coef, cfg.clip_coef)
        l_v = err_sq.maximum((v_clipped - returns) ** 2.0).mean()
    else:
        l_v = err_sq.mean()

    probs = graph.log_probs.exp()
    entropy = -(probs * graph.log_probs).sum(axis=-1).mean()
    kl = (probs * (graph.log_probs - ref_graph.log_probs.data)).sum(axis=-1).mean()

    policy_root = -l_p - cfg.ent_coef * entropy + cfg.kl_coef * kl
    l_total = float(policy_root.data) + cfg.vf_coef * float(l_v.data)
    with np.errstate(over="ignore"):
        approx_kl = float(((ratio.data - 1.0) - log_ratio.data).mean())
    return LossBundle(
        policy_root=policy_root,
        value_root=l_v,
        tensors=graph.tensors,
        l_p=float(l_p.data),
        l_v=float(l_v.data),
        entropy=float(entropy.data),
        kl=float(kl.data),
        l_total=l_total,
        approx_kl=approx_kl,
    )


def minibatch_gradients(bundle: LossBundle, cfg: PpoConfig) -> dict[str, np.ndarray]:
    """Per-group gradients realizing the grouped update rules.

    Policy head follows the policy-side loss, value head the raw value
    loss, and the shared backbone the total loss (policy terms plus
    vf_coef times the value loss).
    """
    graph_tensors = bundle.tensors
    bundle.policy_root.backward()
    g_policy = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in graph_tensors.items()}
    bundle.policy_root.zero_graph_grads()
    bundle.value_root.zero_graph_grads()
    bundle.value_root.backward()
    g_value = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
               for k, t in graph_tensors.items()}

    grads: dict[str, np.ndarray] = {}
    for name in graph_tensors:
        group = group_of(name)
        if group == "policy_head":
            grads[name] = g_policy[name]
        elif group == "value_head":
            grads[name] = g_value[name]
        elif group in BACKBONE_GROUPS:
            grads[name] = g_policy[name] + cfg.vf_coef * g_value[name]
        else:  # frozen
            grads[name] = np.zeros_like(graph_tensors[name].data)
    return grads


# ----------------------------------------------------------------------
# optimizers


class SgdOptimizer:
    """Plain SGD with optional momentum."""

    def __init__(self, momentum: float = 0.0):
        self.momentum = momentum
        self._velocity: dict[str, np.ndarray] = {}

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr_by_name: dict[str, float]) -> None:
        for name, lr in lr_by_name.items():
            g = grads[name]
            if self.momentum > 0.0:
                v = self._velocity.setdefault(name, np.zeros_like(g))
                v *= self.momentum
                v += g
                g = v
            arrays[name] -= lr * g


class AdamOptimizer:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t: dict[str, int] = {}

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr_by_name: dict[str, float]) -> None:
        for name, lr in lr_by_name.items():
            g = grads[name]
            m = self._m.setdefault(name, np.zeros_like(g))
            v = self._v.setdefault(name, np.zeros_like(g))
            t = self._t.get(name, 0) + 1
            self._t[name] = t
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            arrays[name] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(cfg: PpoConfig):
    return AdamOptimizer() if cfg.optimizer == "adam" else SgdOptimizer()


def update(
    params: ParameterStore,
    grads: dict[str, np.ndarray],
    cfg: PpoConfig,
    step: int,
    optimizer=None,
) -> ParameterStore:
    """Apply one grouped gradient step in place.

    Gradients are globally norm-clipped first; learning rates anneal
    linearly to zero across total_timesteps when anneal_lr is set.
    Frozen parameters are untouched by construction.
    """
    optimizer = optimizer or SgdOptimizer()
    arrays = named_params(params)

    updatable = {n: g for n, g in grads.items() if group_of(n) != "frozen"}
    for name, g in updatable.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in group {group_of(name)!r} ({name})")

    sq = sum(float((g * g).sum()) for g in updatable.values())
    global_norm = np.sqrt(sq)
    if global_norm > cfg.max_grad_norm:
        scale = cfg.max_grad_norm / global_norm
        updatable = {n: g * scale for n, g in updatable.items()}

    frac = 1.0
    if cfg.anneal_lr:
        frac = max(0.0, 1.0 - step / cfg.total_timesteps)
    lr_by_name = {
        n: (cfg.lr_heads if group_of(n) in ("policy_head", "value_head") else cfg.lr_backbone) * frac
        for n in updatable
    }
    optimizer.step(arrays, updatable, lr_by_name)
    return params


# ----------------------------------------------------------------------
# training loop


@dataclass
class TrainingLog:
    records: list[dict] = field(default_factory=list)

    def append(self, **kw) -> None:
        self.records.append(dict(kw))

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def train(
    series: MarketSeries,
    model_cfg: ModelConfig,
    ppo_cfg: PpoConfig,
    seed: int,
    initial_cash: float = 1000.0,
    template: PromptTemplate | None = None,
) -> tuple[ParameterStore, TrainingLog]:
    """Run the full collect -> GAE -> update cycle until total_timesteps.

    Returns the trained parameters and a deterministic per-iteration log
    (identical configs and seed give identical logs and parameters).
    """
    rng = np.random.default_rng(seed)
    params = init_params(model_cfg, seed)
    ref_params = copy_store(params)
    streams = make_streams(series, model_cfg, ppo_cfg, initial_cash, template)
    optimizer = make_optimizer(ppo_cfg)
    log = TrainingLog()

    batch_size = ppo_cfg.num_steps * ppo_cfg.num_envs
    iterations = ppo_cfg.total_timesteps // batch_size
    if iterations < 1:
        raise ConfigError(
            f"total_timesteps {ppo_cfg.total_timesteps} is smaller than one rollout ({batch_size})"
        )

    global_step = 0
    for iteration in range(1, iterations + 1):
        lr_step = global_step
        buffer = collect_rollout(streams, params, ppo_cfg, rng)
        global_step += batch_size
        adv_batch = compute_gae(buffer, params, ppo_cfg)
        flat = buffer.flat()

        stats: dict[str, list[float]] = {k: [] for k in ("l_p", "l_v", "entropy", "kl")}
        indices = np.arange(len(flat))
        stop_early = False
        for _ in range(ppo_cfg.update_epochs):
            rng.shuffle(indices)
            starts = range(0, len(indices), ppo_cfg.minibatch_size)
            slices = [indices[s : s + ppo_cfg.minibatch_size] for s in starts]
            acc_grads: dict[str, np.ndarray] | None = None
            acc_count = 0
            for mb_i, mb in enumerate(slices):
                bundle = ppo_losses(
                    [flat[i] for i in mb],
                    adv_batch.advantages[mb],
                    adv_batch.returns[mb],
                    params,
                    ref_params,
                    ppo_cfg,
                )
                grads = minibatch_gradients(bundle, ppo_cfg)
                if acc_grads is None:
                    acc_grads = grads
                else:
                    for k in acc_grads:
                        acc_grads[k] = acc_grads[k] + grads[k]
                acc_count += 1
                for k in stats:
                    stats[k].append(getattr(bundle, k))
                flush = (
                    acc_count >= ppo_cfg.gradient_accumulation_steps
                    or mb_i == len(slices) - 1
                )
                if flush:
                    averaged = {k: v / acc_count for k, v in acc_grads.items()}
                    update(params, averaged, ppo_cfg, lr_step, optimizer)
                    acc_grads, acc_count = None, 0
                if ppo_cfg.target_kl is not None and bundle.approx_kl > ppo_cfg.target_kl:
                    stop_early = True
                    break
            if stop_early:
                break

        frac = max(0.0, 1.0 - lr_step / ppo_cfg.total_timesteps) if ppo_cfg.anneal_lr else 1.0
        log.append(
            iteration=iteration,
            timestep=global_step,
            mean_reward=float(np.mean([t.reward for t in flat])),
            loss_policy=float(np.mean(stats["l_p"])) if stats["l_p"] else 0.0,
            loss_value=float(np.mean(stats["l_v"])) if stats["l_v"] else 0.0,
            entropy=float(np.mean(stats["entropy"])) if stats["entropy"] else 0.0,
            kl=float(np.mean(stats["kl"])) if stats["kl"] else 0.0,
            lr=ppo_cfg.lr_backbone * frac,
        )
        buffer.clear()

    return params, log


__all__ = [
    "PpoConfig",
    "Transition",
    "RolloutBuffer",
    "AdvantageBatch",
    "RolloutStream",
    "LossBundle",
    "TrainingLog",
    "make_streams",
    "collect_rollout",
    "compute_gae",
    "whiten",
    "ppo_losses",
    "minibatch_gradients",
    "update",
    "train",
    "SgdOptimizer",
    "AdamOptimizer",
    "make_optimizer",
    "ADV_STD_EPS",
]
