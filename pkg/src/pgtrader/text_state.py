"""Textual state encoding: market state -> structured prompt -> token ids.

The prompt has four sections (task description, action space, state
block, output instruction) joined by newlines. Numeric fields render at
fixed precision so identical states give byte-identical prompts. The
tokenizer is byte-level (ids 0..255 plus one pad id), reversible for
any text, and truncates overlong sequences from the FRONT so the state
block and output instruction survive at the tail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError
from .trading_env import MarketState

PAD_ID = 256
VOCAB_SIZE = 257

_PLACEHOLDERS = ("{price}", "{sentiment}", "{cash}", "{holdings}")

DEFAULT_TEMPLATE_TEXT = """\
Task: trade a single stock using the state below.
---
Actions: Sell (-1), Hold (0), Buy (1).
---
Price: ${price} | Sentiment: {sentiment} | Cash: {cash} | Holdings: {holdings}
---
Answer with one action.
"""


@dataclass(frozen=True)
class PromptTemplate:
    """Four prompt sections; the state section carries the placeholders."""

    task_description: str
    action_space: str
    state_block: str
    output_instruction: str

    def __post_init__(self):
        for name, section in zip(self._section_names(), self.sections()):
            if not section.strip():
                raise ConfigError(f"template section {name!r} must be non-empty")
        for ph in _PLACEHOLDERS:
            if ph not in self.state_block:
                raise ConfigError(f"state_block is missing placeholder {ph}")

    @staticmethod
    def _section_names():
        return ("task_description", "action_space", "state_block", "output_instruction")

    def sections(self) -> tuple[str, str, str, str]:
        return (
            self.task_description,
            self.action_space,
            self.state_block,
            self.output_instruction,
        )

    @classmethod
    def from_text(cls, text: str) -> "PromptTemplate":
        parts = [p.strip() for p in text.split("---")]
        if len(parts) != 4:
            raise ConfigError(
                f"template must contain exactly 4 sections separated by '---', got {len(parts)}"
            )
        return cls(*parts)

    @classmethod
    def default(cls) -> "PromptTemplate":
        return cls.from_text(DEFAULT_TEMPLATE_TEXT)

    @classmethod
    def load(cls, path: str) -> "PromptTemplate":
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass(frozen=True)
class Prompt:
    text: str
    sections: tuple[str, str, str, str]


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.ids) < 1:
            raise ValidationError("token sequence must contain at least one id")
        if any(not (0 <= i < VOCAB_SIZE) for i in self.ids):
            raise ValidationError("token id out of vocabulary range")

    def __len__(self) -> int:
        return len(self.ids)

    def array(self) -> np.ndarray:
        return np.asarray(self.ids, dtype=np.int64)


def render_prompt(state: MarketState, template: PromptTemplate | None = None) -> Prompt:
    """Fill the template from the state at fixed numeric precision.

    Price and cash render with 2 decimals, sentiment and holdings with 4,
    so distinct states at that precision give distinct prompts.
    """
    template = template or PromptTemplate.default()
    state_block = (
        template.state_block.replace("{price}", f"{state.price:.2f}")
        .replace("{sentiment}", f"{state.sentiment:.4f}")
        .replace("{cash}", f"{state.account.cash:.2f}")
        .replace("{holdings}", f"{state.account.holdings:.4f}")
    )
    sections = (
        template.task_description,
        template.action_space,
        state_block,
        template.output_instruction,
    )
    return Prompt(text="\n".join(sections), sections=sections)


def tokenize(prompt: Prompt | str, max_seq_len: int | None = None) -> TokenSeq:
    """UTF-8 bytes of the prompt text, front-truncated to ``max_seq_len``.

    Keeping the tail preserves the state block and output instruction,
    the parts a causal model's final hidden state reads most directly.
    """
    text = prompt.text if isinstance(prompt, Prompt) else prompt
    ids = tuple(text.encode("utf-8"))
    if max_seq_len is not None:
        if max_seq_len < 1:
            raise ConfigError(f"max_seq_len must be >= 1, got {max_seq_len}")
        if len(ids) > max_seq_len:
            ids = ids[-max_seq_len:]
    return TokenSeq(ids=ids)


def detokenize(tokens: TokenSeq | np.ndarray) -> str:
    ids = tokens.ids if isinstance(tokens, TokenSeq) else tuple(int(i) for i in tokens)
    return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


__all__ = [
    "PAD_ID",
    "VOCAB_SIZE",
    "DEFAULT_TEMPLATE_TEXT",
    "PromptTemplate",
    "Prompt",
    "TokenSeq",
    "render_prompt",
    "tokenize",
    "detokenize",
]
