"""Finite-difference suite at the desk-scale configuration."""

import numpy as np
import pytest

from pgtrader.gradcheck import (
    DEFAULT_TOL,
    FD_GROUPS,
    LORA_IDENTITY_TOL,
    desk_config,
    lora_identity_error,
    run_gradcheck,
)
from pgtrader.policy_model import init_params
from pgtrader.text_state import tokenize
from pgtrader.trading_env import Action


@pytest.fixture(scope="module")
def report():
    return run_gradcheck(seed=0)


class TestGradcheck:
    def test_every_group_under_tolerance(self, report):
        assert set(report.group_errors) == set(FD_GROUPS)
        for group, err in report.group_errors.items():
            assert err < DEFAULT_TOL, f"{group}: {err}"

    def test_frozen_reported_error_exactly_zero(self, report):
        assert report.frozen_max_grad == 0.0

    def test_lora_identity_both_sides_agree(self, report):
        assert report.lora_identity_error is not None
        assert report.lora_identity_error < LORA_IDENTITY_TOL

    def test_report_passes(self, report):
        assert report.passed
        assert len(report.lines()) == len(FD_GROUPS) + 2

    def test_identity_with_full_mask(self):
        store = init_params(desk_config(), seed=1)
        tokens = tokenize("Cash: 42.00").array()
        err = lora_identity_error(store, tokens, np.array([True, True, True]), Action.SELL)
        assert err < LORA_IDENTITY_TOL

    def test_identity_after_perturbing_adapters(self, rng):
        # the identity must hold at any parameter point, not only at init
        store = init_params(desk_config(), seed=2)
        for pair in store.lora:
            pair.a += rng.normal(0, 0.05, pair.a.shape)
            pair.b += rng.normal(0, 0.05, pair.b.shape)
        tokens = tokenize("Price: $10.00").array()
        err = lora_identity_error(store, tokens, np.array([False, True, True]), Action.HOLD)
        assert err < LORA_IDENTITY_TOL
