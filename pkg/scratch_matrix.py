"""Experiment matrix for the learning criterion."""
import itertools
import math
import sys
import time

import numpy as np

from pgtrader.backtest import buy_and_hold_cr_closed_form, run_policy_episode
from pgtrader.market_data import synthetic_series, split
from pgtrader.policy_model import ModelConfig
from pgtrader.ppo_trainer import PpoConfig, train
from pgtrader.text_state import PromptTemplate


def dp_optimal_cr(prices):
    T = len(prices) - 1
    v_cash, v_long = 0.0, 0.0
    for t in reversed(range(T)):
        growth = math.log(prices[t + 1] / prices[t])
        v_cash, v_long = max(v_cash, v_long), growth + max(v_cash, v_long)
    return 100.0 * v_cash


COMPACT = PromptTemplate.from_text(
    "Trade one stock.\n---\nSell -1, Hold 0, Buy 1.\n---\n"
    "P {price} S {sentiment} C {cash} H {holdings}\n---\nAct now."
)

series = split(synthetic_series("alternating", seed=0, length=76), 16)
cr_opt = dp_optimal_cr([b.price for b in series.test_bars])
cr_bh = buy_and_hold_cr_closed_form(series)
print(f"opt {cr_opt:.1f}%  bh {cr_bh:.1f}%")

spec = sys.argv[1] if len(sys.argv) > 1 else "a"
seeds = [int(s) for s in sys.argv[2].split(",")] if len(sys.argv) > 2 else [0]

configs = {
    # name: (n_frozen, n_trainable, lora, d_model, timesteps, template)
    "a": (0, 2, False, 16, 6000, COMPACT),
    "b": (1, 1, False, 16, 6000, COMPACT),
    "c": (1, 1, True, 16, 6000, COMPACT),
    "d": (0, 2, False, 16, 13860, COMPACT),
    "e": (1, 1, True, 16, 13860, COMPACT),
    "f": (1, 1, True, 32, 13860, COMPACT),
    "g": (1, 1, False, 16, 6000, None),  # default template for contrast
}

n_frozen, n_train, lora, d_model, tt, template = configs[spec]
model_cfg = ModelConfig(d_model=d_model, n_layers=2, n_heads=2, d_ff=2 * d_model,
                        max_seq_len=128, n_frozen=n_frozen, n_trainable=n_train,
                        lora_enabled=lora, lora_rank=4)
ppo_cfg = PpoConfig(total_timesteps=tt, optimizer="adam")
for seed in seeds:
    t0 = time.time()
    params, log = train(series, model_cfg, ppo_cfg, seed=seed, template=template)
    wall = time.time() - t0
    result = run_policy_episode(params, series, template=template)
    cr = result.report().cr_pct
    acts = [r.action for r in result.trace[:14]]
    print(f"{spec} seed {seed}: wall {wall:.0f}s  CR {cr:+.1f}%  ratio {cr / cr_opt:+.3f}  "
          f"acts {acts}", flush=True)
