"""Fixed opponent models over two-step public-observation windows.

Models 0-2 always play self, balance and group. Models 3 and 4 react to the
window (previous symbol, current symbol); model 4 mirrors model 3 with self and
group swapped. Windows the tables leave open play ``UNLISTED_ACTION``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import ACTIONS, BALANCE, GROUP, MANY, MEAGER, SELF, SEVERAL, SYMBOLS

UNLISTED_ACTION = BALANCE
N_MODELS = 5


@dataclass(frozen=True)
class ObsWindow:
    """Previous and current public symbol; ``previous is None`` marks the blank start."""

    previous: int | None
    current: int | None

    @classmethod
    def blank(cls) -> "ObsWindow":
        return cls(None, None)

    @property
    def is_blank(self) -> bool:
        return self.current is None

    @property
    def key(self) -> tuple[int, int]:
        if self.current is None:
            raise ValueError("window has no observation yet")
        prev = self.current if self.previous is None else self.previous
        return prev, self.current

    @property
    def index(self) -> int:
        prev, cur = self.key
        return 3 * prev + cur

    def shift(self, symbol: int) -> "ObsWindow":
        symbol = int(symbol)
        if symbol not in (MEAGER, SEVERAL, MANY):
            raise ValueError(f"unknown public symbol {symbol}")
        if self.current is None:
            return ObsWindow(symbol, symbol)
        return ObsWindow(self.current, symbol)

    def __str__(self):
        if self.current is None:
            return "(blank)"
        prev, cur = self.key
        return f"({SYMBOLS[prev]}, {SYMBOLS[cur]})"


def _reactive_table(e_e, s_e, e_s, s_s, m_m, m_s, s_m) -> np.ndarray:
    table = np.full((3, 3), UNLISTED_ACTION, dtype=int)
    table[MEAGER, MEAGER] = e_e
    table[SEVERAL, MEAGER] = s_e
    table[MEAGER, SEVERAL] = e_s
    table[SEVERAL, SEVERAL] = s_s
    table[MANY, MANY] = m_m
    table[MANY, SEVERAL] = m_s
    table[SEVERAL, MANY] = s_m
    table.setflags(write=False)
    return table


def _constant_table(action: int) -> np.ndarray:
    table = np.full((3, 3), action, dtype=int)
    table.setflags(write=False)
    return table


# tables are indexed [previous symbol, current symbol]
POLICY_TABLES = (
    _constant_table(SELF),
    _constant_table(BALANCE),
    _constant_table(GROUP),
    _reactive_table(GROUP, GROUP, BALANCE, BALANCE, SELF, SELF, SELF),
    _reactive_table(SELF, SELF, BALANCE, BALANCE, GROUP, GROUP, GROUP),
)

# (N_MODELS, 9): model m's action at flat window index 3*prev + cur
ACTION_MATRIX = np.stack([t.reshape(-1) for t in POLICY_TABLES])
ACTION_MATRIX.setflags(write=False)


@dataclass(frozen=True)
class OpponentModel:
    id: int
    window: ObsWindow = ObsWindow.blank()

    @property
    def table(self) -> np.ndarray:
        return POLICY_TABLES[self.id]


def make_models(ids=range(N_MODELS), window: ObsWindow | None = None) -> tuple[OpponentModel, ...]:
    window = window or ObsWindow.blank()
    return tuple(OpponentModel(int(i), window) for i in ids)


def model_action(model: OpponentModel) -> int:
    return int(model.table[model.window.key])


def advance_history(model: OpponentModel, symbol: int) -> OpponentModel:
    return OpponentModel(model.id, model.window.shift(symbol))


def table_dump(ids=range(N_MODELS)) -> str:
    """Plain-text listing of every model's action per window."""
    lines = ["window".ljust(22) + "".join(f"model{i}".ljust(9) for i in ids)]
    for prev in range(3):
        for cur in range(3):
            label = f"({SYMBOLS[prev]}, {SYMBOLS[cur]})"
            row = "".join(ACTIONS[POLICY_TABLES[i][prev, cur]].ljust(9) for i in ids)
            lines.append(label.ljust(22) + row)
    return "\n".join(lines)
