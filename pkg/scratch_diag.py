"""Diagnostic: do GAE advantages separate correct from incorrect actions?"""
import numpy as np

from pgtrader.market_data import synthetic_series, split
from pgtrader.policy_model import ModelConfig, init_params
from pgtrader.ppo_trainer import PpoConfig, collect_rollout, compute_gae, make_streams
from pgtrader.text_state import detokenize
from pgtrader.trading_env import Action

series = split(synthetic_series("alternating", seed=0, length=76), 16)
model_cfg = ModelConfig(d_model=16, n_layers=2, n_heads=2, d_ff=32, max_seq_len=288,
                        n_frozen=1, n_trainable=1)
cfg = PpoConfig(total_timesteps=4000, num_steps=40)
params = init_params(model_cfg, seed=0)
rng = np.random.default_rng(0)
streams = make_streams(series, model_cfg, cfg)

# classify each transition by (price, holding?) and whether its action is optimal
stats = {}
reward_stats = {}
for _ in range(25):
    buf = collect_rollout(streams, params, cfg, rng)
    adv = compute_gae(buf, params, cfg)
    flat = buf.flat()
    for t, a in zip(flat, adv.advantages):
        text = detokenize(t.state_tokens)
        price12 = "Price: $12.00" in text
        holding = "Holdings: 0.0000" not in text
        if price12 and not holding:
            correct = Action.BUY
        elif not price12 and holding:
            correct = Action.SELL
        else:
            correct = Action.HOLD
        key = (price12, holding, t.action is correct)
        stats.setdefault(key, []).append(a)
        reward_stats.setdefault((price12, holding, t.action.name), []).append(t.reward)

print("advantages by (price12, holding, took_correct):")
for key in sorted(stats):
    vals = np.array(stats[key])
    print(f"  {key}: n={len(vals):4d}  mean={vals.mean():+.4f}  std={vals.std():.4f}")

print("\nraw rewards by (price12, holding, action):")
for key in sorted(reward_stats):
    vals = np.array(reward_stats[key])
    print(f"  {key}: n={len(vals):4d}  mean={vals.mean():+.5f}  std={vals.std():.5f}")
