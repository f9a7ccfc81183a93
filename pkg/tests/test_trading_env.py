"""Environment mechanics against an independent mark-to-market oracle.

The oracle tracks account equity valued at each bar's own close; daily
pnl must equal its increments regardless of the action taken, and the
ledger must telescope to the total equity change.
"""

import math
import statistics

import numpy as np
import pytest

from pgtrader.errors import ConfigError, HorizonError, MaskedActionError
from pgtrader.market_data import synthetic_series, split
from pgtrader.trading_env import (
    ACTIONS,
    Action,
    AccountState,
    MarketState,
    PnlLedger,
    TradingEnv,
    equity,
    legal_actions,
    legal_mask,
    sharpe,
    warmup_ledger,
)

from conftest import make_series


def state(price, cash, holdings, t=5, sentiment=0.0):
    return MarketState(t=t, price=price, sentiment=sentiment,
                       account=AccountState(cash=cash, holdings=holdings))


def random_episode(rng, n_bars=None, warmup=3):
    """Random positive price path, random legal actions; returns trajectory."""
    n_bars = n_bars or int(rng.integers(warmup + 2, warmup + 67))
    prices = np.exp(rng.normal(0.0, 0.05, n_bars).cumsum()) * float(rng.uniform(5, 500))
    series = make_series(prices.tolist(), warmup_len=warmup)
    env = TradingEnv(series, initial_cash=float(rng.uniform(100, 10_000)))
    st, ledger = env.reset()
    seeded = len(ledger)
    states, pnls = [st], []
    done = False
    while not done:
        choices = sorted(legal_actions(st), key=lambda a: a.code)
        action = choices[rng.integers(len(choices))]
        out = env.step(st, action, ledger)
        states.append(out.next_state)
        pnls.append(out.pnl)
        st = out.next_state
        done = out.done
    return env, states, pnls, ledger, seeded


class TestReset:
    def test_initial_state(self):
        series = make_series([1, 2, 3, 50, 60], warmup_len=3)
        env = TradingEnv(series, initial_cash=1000.0)
        st, _ = env.reset()
        assert st.price == 50.0
        assert st.account.cash == 1000.0
        assert st.account.holdings == 0.0
        assert st.t == 3

    def test_zero_cash_rejected(self):
        series = make_series([1, 2, 3], warmup_len=1)
        with pytest.raises(ConfigError):
            TradingEnv(series, initial_cash=0.0)

    def test_unsplit_series_rejected(self):
        with pytest.raises(ConfigError):
            TradingEnv(make_series([1, 2, 3]), initial_cash=100.0)

    def test_reset_is_deterministic(self):
        series = make_series([1, 2, 3, 4, 5], warmup_len=2)
        env = TradingEnv(series, initial_cash=100.0)
        s1, l1 = env.reset()
        s2, l2 = env.reset()
        assert s1 == s2
        assert l1.history == l2.history

    def test_warmup_seeds_ledger_with_buy_and_hold_pnl(self):
        series = make_series([10, 11, 9, 100, 100], warmup_len=3)
        env = TradingEnv(series, initial_cash=1000.0)
        _, ledger = env.reset()
        # 100 shares at price 10; pnl = 100*(11-10), 100*(9-11)
        assert ledger.history == [100.0, -200.0]


class TestLegalActions:
    def test_no_holdings_excludes_sell(self):
        assert legal_actions(state(100, cash=1000, holdings=0)) == {Action.HOLD, Action.BUY}

    def test_no_cash_excludes_buy(self):
        assert legal_actions(state(100, cash=0, holdings=5)) == {Action.SELL, Action.HOLD}

    def test_empty_account_only_hold(self):
        assert legal_actions(state(100, cash=0, holdings=0)) == {Action.HOLD}

    def test_mask_ordering_matches_actions(self):
        mask = legal_mask(state(100, cash=10, holdings=0))
        assert mask.tolist() == [False, True, True]
        assert [a.code for a in ACTIONS] == [-1, 0, 1]


class TestStep:
    def setup_method(self):
        # prices: warmup 10,10 then test 100, 50, 60, 60
        self.series = make_series([10, 10, 100, 50, 60, 60], warmup_len=2)
        self.env = TradingEnv(self.series, initial_cash=100.0)

    def test_buy_converts_all_cash_at_next_price(self):
        st, ledger = self.env.reset()
        out = self.env.step(st, Action.BUY, ledger)
        assert out.next_state.account.cash == 0.0
        assert out.next_state.account.holdings == pytest.approx(2.0)  # 100 / 50

    def test_sell_liquidates_at_next_price(self):
        st = state(50, cash=0.0, holdings=2.0, t=3)
        ledger = PnlLedger()
        out = self.env.step(st, Action.SELL, ledger)
        assert out.next_state.account.cash == pytest.approx(120.0)  # 2 * 60
        assert out.next_state.account.holdings == 0.0

    def test_hold_keeps_account_and_marks_to_market(self):
        st = state(50, cash=100.0, holdings=1.0, t=3)
        ledger = PnlLedger()
        out = self.env.step(st, Action.HOLD, ledger)
        assert out.next_state.account.cash == 100.0
        assert out.next_state.account.holdings == 1.0
        # oracle: pnl equals the mark-to-market equity increment H*(P' - P)
        assert out.pnl == pytest.approx(1.0 * (60.0 - 50.0))

    def test_illegal_action_raises(self):
        st, ledger = self.env.reset()
        with pytest.raises(MaskedActionError):
            self.env.step(st, Action.SELL, ledger)

    def test_stepping_past_horizon_raises(self):
        last = state(60, cash=1.0, holdings=0.0, t=len(self.series) - 1)
        with pytest.raises(HorizonError):
            self.env.step(last, Action.HOLD, PnlLedger())

    def test_done_flag_at_range_end(self):
        series = make_series([10, 10, 100, 50], warmup_len=2)
        env = TradingEnv(series, initial_cash=100.0)
        st, ledger = env.reset()
        out = env.step(st, Action.HOLD, ledger)
        assert out.done

    def test_step_is_deterministic(self):
        st, ledger1 = self.env.reset()
        _, ledger2 = self.env.reset()
        o1 = self.env.step(st, Action.BUY, ledger1)
        o2 = self.env.step(st, Action.BUY, ledger2)
        assert o1 == o2


class TestSharpe:
    def test_example_from_statistics_oracle(self):
        ledger = PnlLedger(history=[1.0, 2.0, 3.0])
        expected = (statistics.mean([1, 2, 3]) - 0.0) / statistics.stdev([1, 2, 3])
        assert sharpe(ledger) == pytest.approx(expected)
        assert sharpe(ledger) == pytest.approx(2.0)

    def test_single_sample_is_zero(self):
        assert sharpe(PnlLedger(history=[5.0])) == 0.0

    def test_constant_series_is_zero(self):
        assert sharpe(PnlLedger(history=[3.0, 3.0, 3.0])) == 0.0

    def test_empty_ledger_is_zero(self):
        assert sharpe(PnlLedger()) == 0.0

    def test_risk_free_rate_subtracts_from_mean(self):
        ledger = PnlLedger(rf=2.0, history=[1.0, 2.0, 3.0])
        assert sharpe(ledger) == pytest.approx(0.0)

    def test_upto_prefix(self):
        ledger = PnlLedger(history=[1.0, 2.0, 3.0, 100.0])
        assert sharpe(ledger, upto=3) == pytest.approx(2.0)
        assert sharpe(ledger, upto=1) == 0.0


class TestEquity:
    def test_arithmetic(self):
        assert equity(state(50, cash=100, holdings=2)) == 200.0

    def test_empty_account(self):
        assert equity(state(50, cash=0, holdings=0)) == 0.0

    def test_sell_at_valuation_price_preserves_equity(self):
        # selling is booked at the same price the valuation uses
        series = make_series([10, 10, 50, 60, 70], warmup_len=2)
        env = TradingEnv(series, initial_cash=100.0)
        st = state(50, cash=0.0, holdings=2.0, t=2)
        out = env.step(st, Action.SELL, env.reset()[1])
        # equity at arrival equals pre-step equity marked at the arrival price
        assert equity(out.next_state) == pytest.approx(2.0 * 60.0)


class TestConservationAndTelescoping:
    def test_conservation_across_rebooking(self, rng):
        # equity valued at P_{t+1} immediately before and after the trade
        for _ in range(200):
            price_next = float(rng.uniform(1, 200))
            cash = float(rng.uniform(0, 100))
            holdings = float(rng.uniform(0, 10))
            before = cash + holdings * price_next
            for action in ACTIONS:
                if action is Action.SELL:
                    c, h = cash + holdings * price_next, 0.0
                elif action is Action.BUY:
                    c, h = 0.0, holdings + cash / price_next
                else:
                    c, h = cash, holdings
                assert c + h * price_next == pytest.approx(before, rel=1e-12)

    def test_ledger_telescopes_to_equity_change(self, rng):
        for _ in range(50):
            env, states, pnls, ledger, seeded = random_episode(rng)
            total = equity(states[-1]) - equity(states[0])
            assert sum(pnls) == pytest.approx(total, rel=1e-9, abs=1e-9)
            assert ledger.history[seeded:] == pnls

    def test_reward_telescopes_to_final_sharpe(self, rng):
        for _ in range(20):
            n_bars = int(rng.integers(6, 40))
            prices = np.exp(rng.normal(0.0, 0.05, n_bars).cumsum()) * 50.0
            series = make_series(prices.tolist(), warmup_len=3)
            env = TradingEnv(series, initial_cash=500.0)
            st, ledger = env.reset()
            sr0 = sharpe(ledger)
            rewards = []
            done = False
            while not done:
                choices = sorted(legal_actions(st), key=lambda a: a.code)
                action = choices[rng.integers(len(choices))]
                out = env.step(st, action, ledger)
                rewards.append(out.reward)
                st = out.next_state
                done = out.done
            assert sum(rewards) == pytest.approx(sharpe(ledger) - sr0, abs=1e-10)

    def test_buy_then_sell_at_same_price_roundtrips(self):
        series = make_series([10, 10, 50, 50, 50, 50], warmup_len=2)
        env = TradingEnv(series, initial_cash=100.0)
        st, ledger = env.reset()
        before = equity(st)
        out1 = env.step(st, Action.BUY, ledger)
        out2 = env.step(out1.next_state, Action.SELL, ledger)
        assert out2.next_state.account.cash == before
        assert out2.next_state.account.holdings == 0.0
        assert equity(out2.next_state) == before


class TestWarmupLedger:
    def test_short_warmup_gives_empty_ledger(self):
        series = make_series([10, 20, 30], warmup_len=1)
        ledger = warmup_ledger(series, 100.0, 0.0)
        assert ledger.history == []

    def test_scale_invariance_of_seeded_sharpe(self):
        series = make_series([10, 11, 13, 12, 50, 60], warmup_len=4)
        a = warmup_ledger(series, 100.0, 0.0)
        b = warmup_ledger(series, 5000.0, 0.0)
        assert sharpe(a) == pytest.approx(sharpe(b))
