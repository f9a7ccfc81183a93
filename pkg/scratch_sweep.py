"""Learning-rate sweep at the full scaled step budget."""
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
model_cfg = ModelConfig(d_model=16, n_layers=2, n_heads=2, d_ff=32, max_seq_len=128,
                        n_frozen=1, n_trainable=1)

for lr_h, lr_b in [(3e-3, 3e-3), (1e-2, 1e-2), (3e-2, 3e-3), (1e-2, 3e-3)]:
    for seed in (0, 1, 2):
        ppo_cfg = PpoConfig(total_timesteps=13860, optimizer="adam",
                            lr_heads=lr_h, lr_backbone=lr_b)
        t0 = time.time()
        params, log = train(series, model_cfg, ppo_cfg, seed=seed, template=COMPACT)
        result = run_policy_episode(params, series, template=COMPACT)
        cr = result.report().cr_pct
        acts = "".join({1: "B", 0: "h", -1: "S"}[r.action] for r in result.trace[:16])
        mr = [r["mean_reward"] for r in log.records]
        print(f"lrh {lr_h:g} lrb {lr_b:g} seed {seed}: {time.time()-t0:.0f}s "
              f"CR {cr:+8.1f}% ratio {cr/cr_opt:+.3f} acts {acts} "
              f"mr[-5:] {' '.join(f'{m:+.3f}' for m in mr[-5:])}", flush=True)
