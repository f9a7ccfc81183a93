"""Flat key/value run configuration with dotted section names.

Files look like::

    # comment
    model.d_model = 16
    ppo.gamma = 0.95
    data.source = synthetic
    data.generator = alternating
    run.seed = 7

CLI flags override file values. Unknown keys are rejected so typos
surface immediately.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, get_args, get_origin

from .errors import ConfigError, DataError
from .market_data import MarketSeries, load_series, split, synthetic_series
from .policy_model import ModelConfig
from .ppo_trainer import PpoConfig


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    path: str | None = None
    generator: str = "alternating"
    gen_seed: int = 0
    length: int = 140
    warmup_len: int = 10
    symbol: str = "SYN"
    date_column: str = "date"
    price_column: str = "close"
    sentiment_column: str = "sentiment"

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(f"data.source must be 'synthetic' or 'csv', got {self.source!r}")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = ModelConfig()
    ppo: PpoConfig = PpoConfig()
    data: DataConfig = DataConfig()
    initial_cash: float = 1000.0
    rf: float = 0.0
    seed: int = 0
    output_dir: str = "runs"
    trading_days: int = 252
    template_path: str | None = None
    mode: str = "greedy"

    def __post_init__(self):
        if self.initial_cash <= 0.0:
            raise ConfigError(f"initial_cash must be positive, got {self.initial_cash}")
        if self.mode not in ("greedy", "sample"):
            raise ConfigError(f"mode must be 'greedy' or 'sample', got {self.mode!r}")


_RUN_KEYS = ("initial_cash", "rf", "seed", "output_dir", "trading_days",
             "template_path", "mode")


def parse_kv_file(path: str) -> dict[str, str]:
    """Read ``key = value`` lines; '#' starts a comment; blanks ignored."""
    values: dict[str, str] = {}
    try:
        with open(path) as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {raw.rstrip()!r}")
                key, value = line.split("=", 1)
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    return values


def _convert(value: str, annotation: Any, key: str):
    origin = get_origin(annotation)
    if origin is not None and type(None) in get_args(annotation):
        if value.lower() in ("none", ""):
            return None
        inner = [a for a in get_args(annotation) if a is not type(None)][0]
        return _convert(value, inner, key)
    if annotation is bool:
        low = value.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if annotation is int:
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from exc
    if annotation is float:
        try:
            return float(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {value!r}") from exc
    if origin is tuple:
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return value


def _resolve_types(cls):
    # dataclasses store string annotations under `from __future__ import
    # annotations`; resolve them once so _convert sees real types
    import typing
    hints = typing.get_type_hints(cls)

    class _F:
        def __init__(self, name, type_):
            self.name, self.type = name, type_

    return [_F(f.name, hints[f.name]) for f in dataclasses.fields(cls)]


def build_run_config(values: dict[str, str]) -> RunConfig:
    known_prefixes = ("model.", "ppo.", "data.", "run.")
    for key in values:
        if not key.startswith(known_prefixes):
            raise ConfigError(f"unknown config key {key!r} (sections: model, ppo, data, run)")

    def section(section_name: str, cls):
        by_field = {f.name: f for f in _resolve_types(cls)}
        kwargs = {}
        for key, raw in values.items():
            if not key.startswith(section_name + "."):
                continue
            name = key[len(section_name) + 1 :]
            if name not in by_field:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = _convert(raw, by_field[name].type, key)
        return kwargs

    model = ModelConfig(**section("model", ModelConfig))
    ppo = PpoConfig(**section("ppo", PpoConfig))
    data = DataConfig(**section("data", DataConfig))
    run_kwargs = section("run", RunConfig)
    for bad in ("model", "ppo", "data"):
        run_kwargs.pop(bad, None)
    unknown = set(run_kwargs) - set(_RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown run.* keys: {sorted(unknown)}")
    return RunConfig(model=model, ppo=ppo, data=data, **run_kwargs)


def load_run_config(path: str, overrides: dict[str, str] | None = None) -> RunConfig:
    values = parse_kv_file(path)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return build_run_config(values)


def load_series_for(cfg: RunConfig) -> MarketSeries:
    """Materialize and split the series described by the data section."""
    data = cfg.data
    if data.source == "csv":
        if not data.path:
            raise DataError("data.source is 'csv' but data.path is not set")
        series = load_series(
            data.path,
            schema={
                "date": data.date_column,
                "price": data.price_column,
                "sentiment": data.sentiment_column,
            },
            symbol=data.symbol,
            rf=cfg.rf,
        )
    else:
        series = synthetic_series(
            data.generator, data.gen_seed, data.length, symbol=data.symbol, rf=cfg.rf
        )
    return split(series, data.warmup_len)


__all__ = [
    "DataConfig",
    "RunConfig",
    "parse_kv_file",
    "build_run_config",
    "load_run_config",
    "load_series_for",
]
