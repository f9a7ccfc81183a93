"""Policy evaluation over the test range plus the buy-and-hold baseline.

A backtest rolls the (default greedy) policy from the first test bar to
the last, recording equity, pnl and a per-step trace. The baseline
converts all cash into shares at the first test close and never trades
again; its cumulative return is 100*ln(P_end/P_start) in closed form.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .market_data import MarketSeries
from .metrics import MetricsReport, evaluate_episode
from .policy_model import ParameterStore, forward, sample_action
from .text_state import PromptTemplate, render_prompt, tokenize
from .trading_env import (
    Action,
    TradingEnv,
    equity,
    legal_mask,
    sharpe,
    warmup_ledger,
)

TRACE_HEADER = ("t", "price", "action", "cash", "holdings", "pnl", "reward")


@dataclass(frozen=True)
class TraceRow:
    """One executed step: decision time/price, then the post-step account."""

    t: int
    price: float
    action: int
    cash: float
    holdings: float
    pnl: float
    reward: float


@dataclass
class EpisodeResult:
    equity_curve: list[float]
    pnls: list[float]
    trace: list[TraceRow]

    def report(self, rf: float = 0.0, trading_days: int = 252) -> MetricsReport:
        return evaluate_episode(self.equity_curve, self.pnls, rf, trading_days)


def run_policy_episode(
    params: ParameterStore,
    series: MarketSeries,
    initial_cash: float = 1000.0,
    template: PromptTemplate | None = None,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
) -> EpisodeResult:
    """Roll the policy over the whole test range of a split series."""
    template = template or PromptTemplate.default()
    env = TradingEnv(series, initial_cash)
    state, ledger = env.reset()
    curve = [equity(state)]
    pnls: list[float] = []
    trace: list[TraceRow] = []
    done = False
    while not done:
        tokens = tokenize(render_prompt(state, template), params.config.max_seq_len).array()
        out = forward(params, tokens, legal_mask(state))
        action, _ = sample_action(out, rng, mode=mode)
        outcome = env.step(state, action, ledger)
        trace.append(
            TraceRow(
                t=state.t,
                price=state.price,
                action=action.code,
                cash=outcome.next_state.account.cash,
                holdings=outcome.next_state.account.holdings,
                pnl=outcome.pnl,
                reward=outcome.reward,
            )
        )
        pnls.append(outcome.pnl)
        curve.append(equity(outcome.next_state))
        state = outcome.next_state
        done = outcome.done
    return EpisodeResult(equity_curve=curve, pnls=pnls, trace=trace)


def buy_and_hold_episode(series: MarketSeries, initial_cash: float = 1000.0) -> EpisodeResult:
    """Passive baseline: all cash becomes shares at the first test close.

    The conversion happens directly at the first bar's own price (the
    baseline is not routed through the environment's next-bar execution),
    so equity tracks initial_cash * P_t / P_first exactly.
    """
    bars = series.test_bars
    shares = initial_cash / bars[0].price
    ledger = warmup_ledger(series, initial_cash, series.rf)
    curve = [initial_cash]
    pnls: list[float] = []
    trace: list[TraceRow] = []
    for i, (prev, cur) in enumerate(zip(bars, bars[1:])):
        pnl = shares * (cur.price - prev.price)
        prev_sr = sharpe(ledger)
        ledger.append(pnl)
        reward = sharpe(ledger) - prev_sr
        pnls.append(pnl)
        curve.append(shares * cur.price)
        trace.append(
            TraceRow(
                t=series.test_range[0] + i,
                price=prev.price,
                action=Action.BUY.code if i == 0 else Action.HOLD.code,
                cash=0.0,
                holdings=shares,
                pnl=pnl,
                reward=reward,
            )
        )
    return EpisodeResult(equity_curve=curve, pnls=pnls, trace=trace)


def buy_and_hold_cr_closed_form(series: MarketSeries) -> float:
    """100*ln(last test close / first test close)."""
    bars = series.test_bars
    return 100.0 * float(np.log(bars[-1].price / bars[0].price))


def write_trace_csv(path: str, trace: list[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for row in trace:
            writer.writerow(
                [row.t, repr(row.price), row.action, repr(row.cash),
                 repr(row.holdings), repr(row.pnl), repr(row.reward)]
            )


__all__ = [
    "TraceRow",
    "EpisodeResult",
    "run_policy_episode",
    "buy_and_hold_episode",
    "buy_and_hold_cr_closed_form",
    "write_trace_csv",
    "TRACE_HEADER",
]
