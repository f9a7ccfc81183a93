"""Post-hoc trading performance metrics.

Cumulative return, final Sharpe ratio, daily/annualized volatility and
maximum drawdown, computed from an episode's equity curve and pnl
history. All functions are pure; reported values are percents except
the Sharpe ratio, which is dimensionless.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, MetricDomainError
from .trading_env import STD_EPS

TRADING_DAYS_PER_YEAR = 252


@dataclass(frozen=True)
class MetricsReport:
    """The five headline metrics plus the equity curve they came from."""

    cr_pct: float
    sr: float
    av_pct: float
    dv_pct: float
    mdd_pct: float
    equity_curve: tuple[float, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "cr_pct": self.cr_pct,
            "sr": self.sr,
            "av_pct": self.av_pct,
            "dv_pct": self.dv_pct,
            "mdd_pct": self.mdd_pct,
            "equity_curve": list(self.equity_curve),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def cumulative_return(pnl: Sequence[float], balances: Sequence[float]) -> float:
    """Sum of logarithmic per-step returns, in percent.

    ``balances[i]`` is the account value immediately before step ``i``
    earned ``pnl[i]``. When balances evolve by exactly their pnl the sum
    telescopes to ``100 * ln(final / initial)``.
    """
    if len(pnl) != len(balances):
        raise MetricDomainError(
            f"pnl and balances must align, got {len(pnl)} vs {len(balances)}"
        )
    total = 0.0
    for i, (p, b) in enumerate(zip(pnl, balances)):
        if b <= 0.0:
            raise MetricDomainError(f"non-positive balance {b} at step {i}")
        growth = 1.0 + p / b
        if growth <= 0.0:
            raise MetricDomainError(f"loss exceeds balance at step {i} (pnl={p}, balance={b})")
        total += math.log(growth)
    return 100.0 * total


def sharpe_final(pnl: Sequence[float], rf: float = 0.0) -> float:
    """Mean excess pnl over sample std; 0 in the degenerate cases.

    Same convention as the in-episode reward Sharpe: fewer than two
    samples or (near-)zero variance yield 0.
    """
    n = len(pnl)
    if n < 2:
        return 0.0
    arr = np.asarray(pnl, dtype=np.float64)
    std = float(arr.std(ddof=1))
    if std < STD_EPS:
        return 0.0
    return (float(arr.mean()) - rf) / std


def volatility(
    log_returns: Sequence[float], trading_days: int = TRADING_DAYS_PER_YEAR
) -> tuple[float, float]:
    """(daily, annualized) volatility of daily log returns, in percent.

    Input returns are fractions (0.01 == 1%); the annualized figure is
    the daily one scaled by sqrt(trading_days).
    """
    if len(log_returns) < 2:
        raise InsufficientDataError(
            f"volatility needs at least 2 returns, got {len(log_returns)}"
        )
    arr = np.asarray(log_returns, dtype=np.float64)
    dv = float(arr.std(ddof=1)) * 100.0
    av = dv * math.sqrt(trading_days)
    return dv, av


def max_drawdown(equity_curve: Sequence[float]) -> float:
    """Largest running peak-to-trough decline of the curve, in percent."""
    if len(equity_curve) == 0:
        raise MetricDomainError("max_drawdown needs a non-empty curve")
    arr = np.asarray(equity_curve, dtype=np.float64)
    if np.any(arr <= 0.0):
        raise MetricDomainError("equity curve must be strictly positive")
    peaks = np.maximum.accumulate(arr)
    drawdowns = (peaks - arr) / peaks
    return float(drawdowns.max()) * 100.0


def evaluate_episode(
    equity_curve: Sequence[float],
    pnl: Sequence[float],
    rf: float = 0.0,
    trading_days: int = TRADING_DAYS_PER_YEAR,
) -> MetricsReport:
    """Build the full report for one episode.

    ``equity_curve`` has one more entry than ``pnl`` (value before the
    first step, then after each step).
    """
    if len(equity_curve) != len(pnl) + 1:
        raise MetricDomainError(
            f"equity curve must have len(pnl)+1 points, got {len(equity_curve)} vs {len(pnl)}"
        )
    balances = list(equity_curve[:-1])
    cr = cumulative_return(pnl, balances)
    log_returns = [math.log(1.0 + p / b) for p, b in zip(pnl, balances)]
    if len(log_returns) >= 2:
        dv, av = volatility(log_returns, trading_days)
    else:
        dv, av = 0.0, 0.0
    return MetricsReport(
        cr_pct=cr,
        sr=sharpe_final(pnl, rf),
        av_pct=av,
        dv_pct=dv,
        mdd_pct=max_drawdown(equity_curve),
        equity_curve=tuple(float(v) for v in equity_curve),
    )


__all__ = [
    "MetricsReport",
    "cumulative_return",
    "sharpe_final",
    "volatility",
    "max_drawdown",
    "evaluate_episode",
    "TRADING_DAYS_PER_YEAR",
]
