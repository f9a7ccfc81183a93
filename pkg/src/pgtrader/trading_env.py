"""Finite-horizon single-asset trading MDP.

All-in/all-out position sizing, no fees or slippage. Trades execute at
the NEXT bar's close: Sell turns holdings into cash at P_{t+1}, Buy
converts all cash into (fractional) shares at P_{t+1}. Daily pnl is the
mark-to-market equity change between consecutive closes, and the step
reward is the increment of the running Sharpe ratio of the pnl history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigError, HorizonError, MaskedActionError
from .market_data import MarketSeries

# Sample standard deviations below this count as zero variance.
STD_EPS = 1e-12


class Action(IntEnum):
    SELL = -1
    HOLD = 0
    BUY = 1

    @property
    def code(self) -> int:
        return int(self)

    @property
    def index(self) -> int:
        """Position in the fixed (Sell, Hold, Buy) ordering."""
        return int(self) + 1

    @classmethod
    def from_index(cls, index: int) -> "Action":
        return cls(index - 1)


ACTIONS = (Action.SELL, Action.HOLD, Action.BUY)


@dataclass(frozen=True)
class AccountState:
    """Available cash and number of shares held (fractional allowed)."""

    cash: float
    holdings: float

    def __post_init__(self):
        if self.cash < 0.0 or not math.isfinite(self.cash):
            raise ConfigError(f"cash must be non-negative, got {self.cash}")
        if self.holdings < 0.0 or not math.isfinite(self.holdings):
            raise ConfigError(f"holdings must be non-negative, got {self.holdings}")


@dataclass(frozen=True)
class MarketState:
    """Full observation at bar ``t``: market quote plus account balance."""

    t: int
    price: float
    sentiment: float
    account: AccountState


@dataclass(frozen=True)
class StepOutcome:
    next_state: MarketState
    reward: float
    pnl: float
    done: bool


class PnlLedger:
    """Ordered realized daily pnl values plus the risk-free rate."""

    def __init__(self, rf: float = 0.0, history: list[float] | None = None):
        self.rf = rf
        self.history: list[float] = list(history) if history else []

    def append(self, pnl: float) -> None:
        self.history.append(pnl)

    def copy(self) -> "PnlLedger":
        return PnlLedger(rf=self.rf, history=self.history)

    def __len__(self) -> int:
        return len(self.history)


def sharpe(ledger: PnlLedger, upto: int | None = None) -> float:
    """Mean excess pnl over its sample (n-1) standard deviation.

    Defined as 0 with fewer than two samples or (near-)zero variance;
    both degenerate cases would otherwise leave the ratio undefined.
    """
    vals = ledger.history if upto is None else ledger.history[:upto]
    n = len(vals)
    if n < 2:
        return 0.0
    arr = np.asarray(vals, dtype=np.float64)
    std = float(arr.std(ddof=1))
    if std < STD_EPS:
        return 0.0
    return (float(arr.mean()) - ledger.rf) / std


def equity(state: MarketState) -> float:
    """Total account value C_t + H_t * P_t at the state's own price."""
    return state.account.cash + state.account.holdings * state.price


def legal_actions(state: MarketState) -> frozenset[Action]:
    """Hold is always legal; Sell needs holdings, Buy needs cash."""
    legal = {Action.HOLD}
    if state.account.holdings > 0.0:
        legal.add(Action.SELL)
    if state.account.cash > 0.0:
        legal.add(Action.BUY)
    return frozenset(legal)


def legal_mask(state: MarketState) -> np.ndarray:
    """Boolean mask over the fixed (Sell, Hold, Buy) action ordering."""
    legal = legal_actions(state)
    return np.array([a in legal for a in ACTIONS], dtype=bool)


def warmup_ledger(series: MarketSeries, initial_cash: float, rf: float) -> PnlLedger:
    """Pnl ledger pre-seeded by simulating buy-and-hold over the warm-up bars.

    Gives early test-period Sharpe values meaningful statistics; the
    Sharpe ratio is scale-free, so the notional used does not matter.
    """
    ledger = PnlLedger(rf=rf)
    warmup = series.warmup_bars
    if len(warmup) >= 2:
        shares = initial_cash / warmup[0].price
        for prev, cur in zip(warmup, warmup[1:]):
            ledger.append(shares * (cur.price - prev.price))
    return ledger


class TradingEnv:
    """One rollout stream over the test window of a split series.

    Instances are independent; run one per parallel rollout stream. The
    pnl ledger is passed explicitly through ``step`` so stepping is a
    pure function of (state, action, ledger).
    """

    def __init__(self, series: MarketSeries, initial_cash: float, rf: float | None = None):
        if not series.is_split:
            raise ConfigError("series must be split into warm-up and test ranges")
        if not initial_cash > 0.0:
            raise ConfigError(f"initial_cash must be positive, got {initial_cash}")
        self.series = series
        self.initial_cash = float(initial_cash)
        self.rf = series.rf if rf is None else float(rf)

    def _bar(self, t: int):
        return self.series.bars[t]

    def reset(self) -> tuple[MarketState, PnlLedger]:
        t0 = self.series.test_range[0]
        bar = self._bar(t0)
        state = MarketState(
            t=t0,
            price=bar.price,
            sentiment=bar.sentiment,
            account=AccountState(cash=self.initial_cash, holdings=0.0),
        )
        return state, warmup_ledger(self.series, self.initial_cash, self.rf)

    def step(self, state: MarketState, action: Action, ledger: PnlLedger) -> StepOutcome:
        if action not in legal_actions(state):
            raise MaskedActionError(
                f"action {action.name} is masked in state t={state.t} "
                f"(cash={state.account.cash}, holdings={state.account.holdings})"
            )
        t_next = state.t + 1
        end = self.series.test_range[1]
        if t_next >= end:
            raise HorizonError(f"no bar after t={state.t} in the test range")

        next_bar = self._bar(t_next)
        p_next = next_bar.price
        cash, holdings = state.account.cash, state.account.holdings
        if action is Action.SELL:
            cash, holdings = cash + holdings * p_next, 0.0
        elif action is Action.BUY:
            cash, holdings = 0.0, holdings + cash / p_next
        # mark-to-market equity change between consecutive closes
        pnl = (cash - state.account.cash) + (
            holdings * p_next - state.account.holdings * state.price
        )

        prev_sr = sharpe(ledger)
        ledger.append(pnl)
        reward = sharpe(ledger) - prev_sr

        next_state = MarketState(
            t=t_next,
            price=p_next,
            sentiment=next_bar.sentiment,
            account=AccountState(cash=cash, holdings=holdings),
        )
        done = t_next >= end - 1
        return StepOutcome(next_state=next_state, reward=reward, pnl=pnl, done=done)


__all__ = [
    "Action",
    "ACTIONS",
    "AccountState",
    "MarketState",
    "StepOutcome",
    "PnlLedger",
    "TradingEnv",
    "sharpe",
    "equity",
    "legal_actions",
    "legal_mask",
    "warmup_ledger",
    "STD_EPS",
]
