"""Single-asset trading MDP with a text-state transformer policy trained by PPO."""

from .market_data import Bar, MarketSeries, load_series, split, synthetic_series
from .metrics import MetricsReport, evaluate_episode
from .policy_model import ModelConfig, ParameterStore, init_params, forward, sample_action
from .ppo_trainer import PpoConfig, TrainingLog, train
from .text_state import PromptTemplate, render_prompt, tokenize, detokenize
from .trading_env import Action, TradingEnv, sharpe, equity

__version__ = "0.1.0"

__all__ = [
    "Bar",
    "MarketSeries",
    "load_series",
    "split",
    "synthetic_series",
    "MetricsReport",
    "evaluate_episode",
    "ModelConfig",
    "ParameterStore",
    "init_params",
    "forward",
    "sample_action",
    "PpoConfig",
    "TrainingLog",
    "train",
    "PromptTemplate",
    "render_prompt",
    "tokenize",
    "detokenize",
    "Action",
    "TradingEnv",
    "sharpe",
    "equity",
    "__version__",
]
