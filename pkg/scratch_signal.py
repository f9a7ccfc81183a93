"""Track the advantage signal (correct minus incorrect) as training runs."""
import sys

import numpy as np

from pgtrader.market_data import synthetic_series, split
from pgtrader.policy_model import ModelConfig, copy_store, forward, init_params
from pgtrader.ppo_trainer import (
    PpoConfig, collect_rollout, compute_gae, make_streams, minibatch_gradients,
    make_optimizer, ppo_losses, update,
)
from pgtrader.text_state import detokenize, render_prompt, tokenize
from pgtrader.trading_env import AccountState, MarketState, Action, legal_mask

series = split(synthetic_series("alternating", seed=0, length=76), 16)
model_cfg = ModelConfig(d_model=16, n_layers=2, n_heads=2, d_ff=32, max_seq_len=288,
                        n_frozen=1, n_trainable=1)
TT = int(sys.argv[1]) if len(sys.argv) > 1 else 3200
SEED = int(sys.argv[2]) if len(sys.argv) > 2 else 0
cfg = PpoConfig(total_timesteps=TT, optimizer="adam")


def classify(t):
    text = detokenize(t.state_tokens)
    price12 = "Price: $12.00" in text
    holding = "Holdings: 0.0000" not in text
    if price12 and not holding:
        return Action.BUY
    if not price12 and holding:
        return Action.SELL
    return Action.HOLD


probe_states = {
    "10,long": MarketState(0, 10.0, 0.0, AccountState(0.0, 100.0)),
    "12,long": MarketState(0, 12.0, 0.0, AccountState(0.0, 100.0)),
    "10,cash": MarketState(0, 10.0, 0.0, AccountState(1000.0, 0.0)),
    "12,cash": MarketState(0, 12.0, 0.0, AccountState(1000.0, 0.0)),
}


def probe_values(params):
    vals = {}
    for name, st in probe_states.items():
        tokens = tokenize(render_prompt(st), model_cfg.max_seq_len).array()
        vals[name] = forward(params, tokens, legal_mask(st)).value
    return vals


rng = np.random.default_rng(SEED)
params = init_params(model_cfg, SEED)
ref = copy_store(params)
streams = make_streams(series, model_cfg, cfg)
opt = make_optimizer(cfg)
batch = cfg.num_steps * cfg.num_envs
iters = cfg.total_timesteps // batch
gstep = 0
sig_hist = []
for it in range(1, iters + 1):
    buf = collect_rollout(streams, params, cfg, rng)
    adv = compute_gae(buf, params, cfg)
    flat = buf.flat()

    good = [a for t, a in zip(flat, adv.advantages) if t.action is classify(t)]
    bad = [a for t, a in zip(flat, adv.advantages) if t.action is not classify(t)]
    took_correct = len(good) / len(flat)
    signal = (np.mean(good) if good else np.nan) - (np.mean(bad) if bad else np.nan)
    sig_hist.append(signal)

    idx = np.arange(len(flat))
    rng.shuffle(idx)
    acc, count = None, 0
    slices = [idx[s:s + cfg.minibatch_size] for s in range(0, len(idx), cfg.minibatch_size)]
    for k, mb in enumerate(slices):
        b = ppo_losses([flat[i] for i in mb], adv.advantages[mb], adv.returns[mb],
                       params, ref, cfg)
        g = minibatch_gradients(b, cfg)
        acc = g if acc is None else {n: acc[n] + g[n] for n in acc}
        count += 1
        if count >= cfg.gradient_accumulation_steps or k == len(slices) - 1:
            update(params, {n: v / count for n, v in acc.items()}, cfg, gstep, opt)
            acc, count = None, 0
    gstep += batch
    if it % 10 == 0 or it == 1:
        pv = probe_values(params)
        print(f"it {it:3d}  correct% {took_correct:.2f}  sig {signal:+.4f} "
              f"(mean last10 {np.nanmean(sig_hist[-10:]):+.4f})  "
              + " ".join(f"V({k})={v:+.3f}" for k, v in pv.items()), flush=True)
