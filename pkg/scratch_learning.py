"""Scratch experiment for the learning acceptance criterion (not shipped)."""
import math
import sys
import time

import numpy as np

from pgtrader.backtest import buy_and_hold_cr_closed_form, run_policy_episode
from pgtrader.market_data import synthetic_series, split
from pgtrader.policy_model import ModelConfig
from pgtrader.ppo_trainer import PpoConfig, train
from pgtrader.text_state import PromptTemplate, render_prompt
from pgtrader.trading_env import AccountState, MarketState


def dp_optimal_cr(prices):
    T = len(prices) - 1
    v_cash, v_long = 0.0, 0.0  # values at t = T
    for t in reversed(range(T)):
        growth = math.log(prices[t + 1] / prices[t])
        v_cash, v_long = max(v_cash, v_long), growth + max(v_cash, v_long)
    return 100.0 * v_cash


def main(total_timesteps=4000, d_model=16, seed=0, optimizer="adam", lr=5e-4):
    series = split(synthetic_series("alternating", seed=0, length=76), 16)
    test_prices = [b.price for b in series.test_bars]
    cr_opt = dp_optimal_cr(test_prices)
    cr_bh = buy_and_hold_cr_closed_form(series)

    # check rendered prompt size
    probe = MarketState(t=0, price=12.0, sentiment=0.0,
                        account=AccountState(cash=123456.78, holdings=0.0))
    ptext = render_prompt(probe).text
    print(f"prompt bytes ~ {len(ptext.encode())}")

    model_cfg = ModelConfig(d_model=d_model, n_layers=2, n_heads=2, d_ff=2 * d_model,
                            max_seq_len=288, n_frozen=1, n_trainable=1)
    ppo_cfg = PpoConfig(total_timesteps=total_timesteps, optimizer=optimizer,
                        lr_heads=lr, lr_backbone=lr)
    t0 = time.time()
    params, log = train(series, model_cfg, ppo_cfg, seed=seed)
    wall = time.time() - t0

    result = run_policy_episode(params, series, initial_cash=1000.0)
    cr = result.report().cr_pct
    rewards = [r["mean_reward"] for r in log.records]
    print(f"seed {seed}: wall {wall:.1f}s  CR {cr:.1f}%  opt {cr_opt:.1f}%  "
          f"ratio {cr / cr_opt:.3f}  B&H {cr_bh:.2f}%")
    print("  mean rewards:", " ".join(f"{r:.3f}" for r in rewards[:: max(1, len(rewards) // 12)]))
    actions = [row.action for row in result.trace[:20]]
    print("  first greedy actions:", actions)
    return cr / cr_opt


if __name__ == "__main__":
    tt = int(sys.argv[1]) if len(sys.argv) > 1 else 4000
    seeds = [int(s) for s in sys.argv[2].split(",")] if len(sys.argv) > 2 else [0]
    for s in seeds:
        main(total_timesteps=tt, seed=s)
