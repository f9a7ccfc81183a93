"""End-to-end command behaviour: files written, exit codes, determinism."""

import json
import math

import pytest

from pgtrader.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main

TINY_MODEL = """
model.d_model = 8
model.n_heads = 2
model.n_layers = 2
model.n_frozen = 1
model.n_trainable = 1
model.d_ff = 16
model.max_seq_len = 160
"""

TINY_TRAIN = TINY_MODEL + """
ppo.num_steps = 5
ppo.total_timesteps = 15
ppo.minibatch_size = 8
ppo.max_episode_steps = 6
data.source = synthetic
data.generator = alternating
data.length = 16
data.warmup_len = 4
run.seed = 5
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.fixture
def train_setup(tmp_path):
    cfg = write(tmp_path, "run.cfg", TINY_TRAIN + f"run.output_dir = {tmp_path / 'out'}\n")
    return cfg, tmp_path / "out"


class TestTrain:
    def test_writes_checkpoint_and_log(self, train_setup, capsys):
        cfg, out = train_setup
        assert main(["train", "--config", cfg]) == EXIT_OK
        assert (out / "checkpoint.bin").exists()
        assert (out / "training_log.jsonl").exists()
        assert (out / "run_meta.json").exists()
        lines = (out / "training_log.jsonl").read_text().strip().splitlines()
        assert len(lines) == 3  # floor(15 / 5)
        record = json.loads(lines[0])
        assert "wall_ms" not in record and "wall_s" not in record

    def test_missing_data_file_exits_nonzero_naming_path(self, tmp_path, capsys):
        cfg = write(
            tmp_path, "bad.cfg",
            TINY_TRAIN + "data.source = csv\ndata.path = /no/such/file.csv\n",
        )
        code = main(["train", "--config", cfg])
        assert code == EXIT_DATA
        assert "/no/such/file.csv" in capsys.readouterr().err

    def test_seed_flag_overrides_config(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        out_c = tmp_path / "c"
        cfg = write(tmp_path, "run.cfg", TINY_TRAIN)
        assert main(["train", "--config", cfg, "--out", str(out_a)]) == EXIT_OK
        assert main(["train", "--config", cfg, "--seed", "5", "--out", str(out_b)]) == EXIT_OK
        assert main(["train", "--config", cfg, "--seed", "99", "--out", str(out_c)]) == EXIT_OK
        log_a = (out_a / "training_log.jsonl").read_bytes()
        log_b = (out_b / "training_log.jsonl").read_bytes()
        log_c = (out_c / "training_log.jsonl").read_bytes()
        assert log_a == log_b  # config seed is 5
        assert log_a != log_c

    def test_reruns_byte_identical(self, tmp_path):
        cfg = write(tmp_path, "run.cfg", TINY_TRAIN)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", cfg, "--out", str(out_a)]) == EXIT_OK
        assert main(["train", "--config", cfg, "--out", str(out_b)]) == EXIT_OK
        assert (out_a / "checkpoint.bin").read_bytes() == (out_b / "checkpoint.bin").read_bytes()
        assert (out_a / "training_log.jsonl").read_bytes() == (
            out_b / "training_log.jsonl"
        ).read_bytes()


class TestBacktest:
    @pytest.fixture
    def checkpoint(self, train_setup):
        cfg, out = train_setup
        main(["train", "--config", cfg])
        return cfg, str(out / "checkpoint.bin"), out

    def test_writes_metrics_and_trace(self, checkpoint, capsys):
        cfg, ckpt, out = checkpoint
        assert main(["backtest", "--config", cfg, "--checkpoint", ckpt]) == EXIT_OK
        payload = json.loads((out / "metrics.json").read_text())
        assert set(payload) >= {"cr_pct", "sr", "av_pct", "dv_pct", "mdd_pct"}
        assert (out / "trace.csv").read_text().startswith("t,price,action")

    def test_flat_series_cr_zero(self, tmp_path, checkpoint):
        cfg_text = TINY_TRAIN.replace("data.generator = alternating",
                                      "data.generator = trend") + "run.seed = 5\n"
        # constant series via trend with zero drift is not exposed; use csv
        from pgtrader.market_data import synthetic_series, write_csv as dump
        import dataclasses

        _, ckpt, out = checkpoint
        flat = synthetic_series("trend", seed=0, length=16, drift=0.0)
        path = tmp_path / "flat.csv"
        dump(flat, str(path))
        cfg = write(tmp_path, "flat.cfg",
                    TINY_TRAIN + f"run.output_dir = {out}\n")
        assert main(["backtest", "--config", cfg, "--checkpoint", ckpt,
                     "--data", str(path)]) == EXIT_OK
        payload = json.loads((out / "metrics.json").read_text())
        assert payload["cr_pct"] == 0.0

    def test_repeat_backtests_identical(self, checkpoint):
        cfg, ckpt, out = checkpoint
        main(["backtest", "--config", cfg, "--checkpoint", ckpt])
        first = (out / "metrics.json").read_bytes()
        main(["backtest", "--config", cfg, "--checkpoint", ckpt])
        assert (out / "metrics.json").read_bytes() == first

    def test_missing_checkpoint_flag_is_usage_error(self, checkpoint, capsys):
        cfg, _, _ = checkpoint
        assert main(["backtest", "--config", cfg]) == EXIT_USAGE

    def test_mismatched_model_section_rejected(self, checkpoint, tmp_path, capsys):
        cfg, ckpt, out = checkpoint
        other = write(tmp_path, "other.cfg",
                      TINY_TRAIN.replace("model.d_model = 8", "model.d_model = 16"))
        assert main(["backtest", "--config", other, "--checkpoint", ckpt]) == EXIT_USAGE


class TestCompare:
    def test_side_by_side_rows(self, train_setup, capsys):
        cfg, out = train_setup
        main(["train", "--config", cfg])
        ckpt = str(out / "checkpoint.bin")
        assert main(["compare", "--config", cfg, "--checkpoint", ckpt]) == EXIT_OK
        payload = json.loads((out / "compare.json").read_text())
        assert set(payload) == {"policy", "buy_and_hold"}
        assert set(payload["policy"]) == set(payload["buy_and_hold"])
        text = capsys.readouterr().out
        assert "buy_and_hold" in text and "policy" in text

    def test_baseline_matches_closed_form(self, tmp_path, train_setup):
        from pgtrader.market_data import synthetic_series, write_csv as dump

        cfg, out = train_setup
        main(["train", "--config", cfg])
        ckpt = str(out / "checkpoint.bin")
        up = synthetic_series("trend", seed=0, length=16, start=50.0, drift=2.0)
        path = tmp_path / "up.csv"
        dump(up, str(path))
        assert main(["compare", "--config", cfg, "--checkpoint", ckpt,
                     "--data", str(path)]) == EXIT_OK
        payload = json.loads((out / "compare.json").read_text())
        prices = [b.price for b in up.bars[4:]]
        expected = 100.0 * math.log(prices[-1] / prices[0])
        assert payload["buy_and_hold"]["cr_pct"] == pytest.approx(expected, abs=1e-6)


class TestGradcheckCommand:
    def test_default_desk_config_passes(self, capsys):
        assert main(["gradcheck"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "gradcheck passed" in out
        for group in ("train", "lora", "policy_head", "value_head", "frozen"):
            assert group in out


class TestUsage:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == EXIT_USAGE

    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_bad_config_key_is_usage_error(self, tmp_path, capsys):
        cfg = write(tmp_path, "bad.cfg", "model.banana = 7\n")
        assert main(["train", "--config", cfg]) == EXIT_USAGE
