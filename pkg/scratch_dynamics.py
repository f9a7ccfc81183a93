"""Watch per-state policy probabilities evolve during training."""
import sys

import numpy as np

from pgtrader.market_data import synthetic_series, split
from pgtrader.policy_model import ModelConfig, copy_store, forward, init_params
from pgtrader.ppo_trainer import (
    PpoConfig, collect_rollout, compute_gae, make_streams, minibatch_gradients,
    make_optimizer, ppo_losses, update,
)
from pgtrader.text_state import render_prompt, tokenize
from pgtrader.trading_env import AccountState, MarketState, legal_mask

series = split(synthetic_series("alternating", seed=0, length=76), 16)
model_cfg = ModelConfig(d_model=16, n_layers=2, n_heads=2, d_ff=32, max_seq_len=288,
                        n_frozen=1, n_trainable=1)
TT = int(sys.argv[1]) if len(sys.argv) > 1 else 6000
SEED = int(sys.argv[2]) if len(sys.argv) > 2 else 0
cfg = PpoConfig(total_timesteps=TT, optimizer="adam")

probes = {
    "10,cash": (MarketState(0, 10.0, 0.0, AccountState(1000.0, 0.0)), 1),   # want Hold
    "12,cash": (MarketState(0, 12.0, 0.0, AccountState(1000.0, 0.0)), 2),   # want Buy
    "10,long": (MarketState(0, 10.0, 0.0, AccountState(0.0, 83.3333)), 0),  # want Sell
    "12,long": (MarketState(0, 12.0, 0.0, AccountState(0.0, 100.0)), 1),    # want Hold
}


def probe_probs(params):
    out = {}
    for name, (st, want) in probes.items():
        tokens = tokenize(render_prompt(st), model_cfg.max_seq_len).array()
        pol = forward(params, tokens, legal_mask(st))
        out[name] = pol.masked_probs[want]
    return out


rng = np.random.default_rng(SEED)
params = init_params(model_cfg, SEED)
ref = copy_store(params)
streams = make_streams(series, model_cfg, cfg)
opt = make_optimizer(cfg)
batch = cfg.num_steps * cfg.num_envs
iters = cfg.total_timesteps // batch
gstep = 0
for it in range(1, iters + 1):
    buf = collect_rollout(streams, params, cfg, rng)
    adv = compute_gae(buf, params, cfg)
    flat = buf.flat()
    idx = np.arange(len(flat))
    rng.shuffle(idx)
    stats = []
    acc, count = None, 0
    slices = [idx[s:s + cfg.minibatch_size] for s in range(0, len(idx), cfg.minibatch_size)]
    for k, mb in enumerate(slices):
        b = ppo_losses([flat[i] for i in mb], adv.advantages[mb], adv.returns[mb],
                       params, ref, cfg)
        g = minibatch_gradients(b, cfg)
        acc = g if acc is None else {n: acc[n] + g[n] for n in acc}
        count += 1
        stats.append((b.l_v, b.entropy, b.kl))
        if count >= cfg.gradient_accumulation_steps or k == len(slices) - 1:
            update(params, {n: v / count for n, v in acc.items()}, cfg, gstep, opt)
            acc, count = None, 0
    gstep += batch
    if it % 15 == 0 or it == 1:
        pp = probe_probs(params)
        lv = np.mean([s[0] for s in stats])
        ent = np.mean([s[1] for s in stats])
        kl = np.mean([s[2] for s in stats])
        mr = np.mean([t.reward for t in flat])
        print(f"it {it:3d} step {gstep:5d}  mr {mr:+.4f}  lv {lv:.4f} ent {ent:.3f} "
              f"kl {kl:.4f}  " + "  ".join(f"{k}:{v:.2f}" for k, v in pp.items()),
              flush=True)
