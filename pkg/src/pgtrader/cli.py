"""Command-line entry points: train, backtest, compare, gradcheck.

Exit codes: 0 success, 1 usage/config problem, 2 data problem,
3 numerical failure. All emitted JSON is deterministic for a given
(config, seed); wall-clock timing goes to a separate run_meta.json.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import backtest as bt
from .config import RunConfig, load_run_config, load_series_for
from .errors import (
    CompatibilityError,
    ConfigError,
    DataError,
    NumericalError,
    PgTraderError,
)
from .gradcheck import desk_config, run_gradcheck
from .policy_model import ModelConfig, load_checkpoint, save_checkpoint
from .ppo_trainer import train
from .text_state import PromptTemplate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="pgtrader", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", default=None, help="override run.output_dir")
        p.add_argument("--data", default=None, help="CSV path, overrides the data section")

    p_train = sub.add_parser("train", help="train a policy and write a checkpoint")
    common(p_train)

    p_back = sub.add_parser("backtest", help="roll a checkpoint over the test range")
    common(p_back)
    p_back.add_argument("--checkpoint", required=True)
    p_back.add_argument("--mode", choices=("greedy", "sample"), default=None)

    p_cmp = sub.add_parser("compare", help="backtest against buy-and-hold")
    common(p_cmp)
    p_cmp.add_argument("--checkpoint", required=True)
    p_cmp.add_argument("--mode", choices=("greedy", "sample"), default=None)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p_grad)
    return parser


def _run_config(args) -> RunConfig:
    overrides: dict[str, str] = {}
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.out is not None:
        overrides["run.output_dir"] = args.out
    if args.data is not None:
        overrides["data.source"] = "csv"
        overrides["data.path"] = args.data
    if args.config:
        return load_run_config(args.config, overrides)
    from .config import build_run_config

    return build_run_config(overrides)


def _template(cfg: RunConfig) -> PromptTemplate:
    if cfg.template_path:
        return PromptTemplate.load(cfg.template_path)
    return PromptTemplate.default()


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = _run_config(args)
    series = load_series_for(cfg)
    out = _out_dir(cfg)
    started = time.time()
    params, log = train(
        series,
        cfg.model,
        cfg.ppo,
        seed=cfg.seed,
        initial_cash=cfg.initial_cash,
        template=_template(cfg),
    )
    wall_s = time.time() - started
    save_checkpoint(out / "checkpoint.bin", params, step=cfg.ppo.total_timesteps)
    (out / "training_log.jsonl").write_text(log.to_jsonl())
    (out / "run_meta.json").write_text(
        json.dumps({"wall_s": wall_s, "finished_unix": time.time()}, sort_keys=True) + "\n"
    )
    last = log.records[-1] if log.records else {}
    print(f"trained {len(log.records)} iterations; final mean reward "
          f"{last.get('mean_reward', float('nan')):.6f}")
    print(f"wrote {out / 'checkpoint.bin'} and {out / 'training_log.jsonl'}")
    return EXIT_OK


def _load_compatible_checkpoint(args, cfg: RunConfig):
    params, step = load_checkpoint(args.checkpoint)
    if args.config:
        # a model section in the config must agree with the checkpoint
        file_model = cfg.model
        if file_model != ModelConfig() and file_model != params.config:
            raise CompatibilityError(
                "model section in the config file disagrees with the checkpoint"
            )
    return params, step


def cmd_backtest(args) -> int:
    cfg = _run_config(args)
    series = load_series_for(cfg)
    params, _ = _load_compatible_checkpoint(args, cfg)
    mode = args.mode or cfg.mode
    rng = np.random.default_rng(cfg.seed) if mode == "sample" else None
    result = bt.run_policy_episode(
        params, series, cfg.initial_cash, _template(cfg), mode=mode, rng=rng
    )
    report = result.report(cfg.rf, cfg.trading_days)
    out = _out_dir(cfg)
    (out / "metrics.json").write_text(report.to_json() + "\n")
    bt.write_trace_csv(out / "trace.csv", result.trace)
    print(f"CR {report.cr_pct:.3f}%  SR {report.sr:.3f}  AV {report.av_pct:.3f}%  "
          f"MDD {report.mdd_pct:.3f}%")
    print(f"wrote {out / 'metrics.json'} and {out / 'trace.csv'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _run_config(args)
    series = load_series_for(cfg)
    params, _ = _load_compatible_checkpoint(args, cfg)
    mode = args.mode or cfg.mode
    rng = np.random.default_rng(cfg.seed) if mode == "sample" else None
    policy_result = bt.run_policy_episode(
        params, series, cfg.initial_cash, _template(cfg), mode=mode, rng=rng
    )
    baseline_result = bt.buy_and_hold_episode(series, cfg.initial_cash)
    policy_report = policy_result.report(cfg.rf, cfg.trading_days)
    baseline_report = baseline_result.report(cfg.rf, cfg.trading_days)

    out = _out_dir(cfg)
    payload = {
        "policy": policy_report.to_dict(),
        "buy_and_hold": baseline_report.to_dict(),
    }
    (out / "compare.json").write_text(json.dumps(payload, sort_keys=True) + "\n")

    header = f"{'strategy':14s} {'CR%':>10s} {'SR':>8s} {'AV%':>10s} {'MDD%':>8s}"
    print(header)
    for name, rep in (("policy", policy_report), ("buy_and_hold", baseline_report)):
        print(f"{name:14s} {rep.cr_pct:10.3f} {rep.sr:8.3f} {rep.av_pct:10.3f} "
              f"{rep.mdd_pct:8.3f}")
    print(f"wrote {out / 'compare.json'}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.config:
        cfg = _run_config(args)
        model_cfg = cfg.model
        seed = cfg.seed
    else:
        model_cfg = desk_config()
        seed = args.seed if args.seed is not None else 0
    report = run_gradcheck(model_cfg, seed=seed)
    for line in report.lines():
        print(line)
    if not report.passed:
        print("gradcheck FAILED")
        return EXIT_NUMERIC
    print("gradcheck passed")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "train": cmd_train,
            "backtest": cmd_backtest,
            "compare": cmd_compare,
            "gradcheck": cmd_gradcheck,
        }[args.command]
        return handler(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, PgTraderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
