"""Organization domain: a five-level financial-health state shared by n workers.

Each worker picks ``self``, ``balance`` or ``group``. The joint action is decided
by comparing the self and group counts, rewards are split into an individual part
``Ri``, a group part ``R0`` every worker receives, and a bonus equal to a fraction
``phi`` of the previous step's team total. The bonus makes the reward depend on
history, so the state carries ``s_r`` (the previous team total including its own
bonus) to keep the dynamics Markovian.

Scalar functions (:func:`resolve_joint`, :func:`step`, ...) define the domain.
:func:`step_batch` is a vectorised twin used by the training loop; the two are
checked against each other in the test suite.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple, Sequence

import numpy as np

LEVELS = ("vl", "l", "m", "h", "vh")
ACTIONS = ("self", "balance", "group")
SYMBOLS = ("meager", "several", "many")
PRIVATE_SYMBOLS = ("saw_self", "saw_balance", "saw_group")

SELF, BALANCE, GROUP = 0, 1, 2
VL, L, M, H, VH = range(5)
MEAGER, SEVERAL, MANY = 0, 1, 2

# health level -> public order-volume symbol
LEVEL_SYMBOL = np.array([MEAGER, MEAGER, SEVERAL, SEVERAL, MANY])


def level_index(level) -> int:
    if isinstance(level, str):
        return LEVELS.index(level)
    level = int(level)
    if not 0 <= level < len(LEVELS):
        raise ValueError(f"health level out of range: {level}")
    return level


def action_index(action) -> int:
    if isinstance(action, str):
        return ACTIONS.index(action)
    action = int(action)
    if not 0 <= action < len(ACTIONS):
        raise ValueError(f"action out of range: {action}")
    return action


@dataclass(frozen=True)
class DomainParams:
    r: float = 1.0
    beta: float = 3.0
    alpha: float = 16.0 / 9.0
    c: float = 0.5
    phi: float = 0.5
    penalty: float = -10.0
    n_agents: int = 2
    private_noise: float = 0.2
    public_noise: float = 0.0
    gamma: float = 0.95
    # a level name, or "uniform" for a random start level
    start: str = "m"

    def __post_init__(self):
        self.validate()

    @property
    def d(self) -> float:
        return (1.0 + self.beta) / self.alpha

    def validate(self):
        errors = []
        if not self.r > 0:
            errors.append(f"r must be > 0 (got {self.r})")
        if not self.beta > 1:
            errors.append(f"beta must be > 1 (got {self.beta})")
        if not self.alpha > 0 or not 1 < self.d < self.beta:
            errors.append(f"need 1 < (1+beta)/alpha < beta (got d={self.d:.6g})")
        if not 0 < self.c < 1:
            errors.append(f"c must be in (0,1) (got {self.c})")
        if not 0 < self.phi < 1:
            errors.append(f"phi must be in (0,1) (got {self.phi})")
        if not self.penalty < 0:
            errors.append(f"penalty must be < 0 (got {self.penalty})")
        if int(self.n_agents) != self.n_agents or self.n_agents < 2:
            errors.append(f"n_agents must be an integer >= 2 (got {self.n_agents})")
        for name in ("private_noise", "public_noise"):
            eta = getattr(self, name)
            if not 0 <= eta <= 2 / 3:
                errors.append(f"{name} must be in [0, 2/3] (got {eta})")
        if not 0 < self.gamma < 1:
            errors.append(f"gamma must be in (0,1) (got {self.gamma})")
        if self.start != "uniform" and self.start not in LEVELS:
            errors.append(f"start must be one of {LEVELS} or 'uniform' (got {self.start!r})")
        if errors:
            raise ValueError("; ".join(errors))

    def replace(self, **changes) -> "DomainParams":
        return DomainParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def max_step_reward(self) -> float:
        """Largest |team base total| over all levels and joint actions."""
        return _max_step_reward(self.r, self.beta, self.alpha, self.c, self.penalty, self.n_agents)

    def reward_bound(self) -> float:
        """Bound on |s_r|: the bonus recursion is a geometric series in phi."""
        return self.max_step_reward() / (1.0 - self.phi)


def _max_step_reward(r, beta, alpha, c, penalty, n_agents) -> float:
    d = (1.0 + beta) / alpha
    self_i, bal_i, bal_0, grp_0 = beta * r, c * d * r, (1 - c) * d * r, r
    best = 0.0
    # team total only depends on how many agents chose each action
    for n_self in range(n_agents + 1):
        for n_bal in range(n_agents + 1 - n_self):
            n_grp = n_agents - n_self - n_bal
            base = n_self * self_i + n_bal * (bal_i + bal_0) + n_grp * grp_0
            best = max(best, abs(base), abs(base + n_agents * penalty))
    return best


class JointOutcome(NamedTuple):
    category: int
    unanimous_group: bool


@dataclass(frozen=True)
class OrgState:
    level: int
    s_r: float = 0.0


@dataclass(frozen=True)
class PublicObs:
    o_f: int
    o_r: float


@dataclass(frozen=True)
class RewardBreakdown:
    R0: float
    Ri: np.ndarray
    bonus: float = 0.0

    @property
    def team_total(self) -> float:
        return float(self.Ri.sum() + self.R0)

    def per_agent(self) -> np.ndarray:
        return self.R0 + self.Ri + self.bonus


@dataclass(frozen=True)
class StepResult:
    state: OrgState
    public: PublicObs
    # private[i, j] is what agent i perceived of agent j's action; -1 on the diagonal
    private: np.ndarray
    rewards: np.ndarray
    breakdown: RewardBreakdown = field(repr=False)


def resolve_joint(actions: Sequence) -> JointOutcome:
    acts = [action_index(a) for a in actions]
    if not acts:
        raise ValueError("empty action vector")
    n_self = acts.count(SELF)
    n_group = acts.count(GROUP)
    if n_self > n_group:
        category = SELF
    elif n_self < n_group:
        category = GROUP
    else:
        category = BALANCE
    return JointOutcome(category, n_group == len(acts))


def transition_level(level, outcome: JointOutcome) -> int:
    level = level_index(level)
    if outcome.category == SELF:
        return max(level - 1, 0)
    if outcome.category == GROUP:
        return min(level + (2 if outcome.unanimous_group else 1), len(LEVELS) - 1)
    return level


def base_rewards(level, actions: Sequence, params: DomainParams) -> RewardBreakdown:
    """Individual and group rewards for one step, without the bonus.

    Each agent contributes to the shared pot additively: ``group`` adds ``r`` to R0,
    ``balance`` splits ``d*r`` between its own Ri (share ``c``) and R0, ``self`` keeps
    ``beta*r``. At the lowest level every agent also takes the penalty.
    """
    level = level_index(level)
    acts = np.array([action_index(a) for a in actions])
    d, r = params.d, params.r
    Ri = np.where(acts == SELF, params.beta * r, 0.0) + np.where(acts == BALANCE, params.c * d * r, 0.0)
    R0 = float(np.sum(acts == GROUP) * r + np.sum(acts == BALANCE) * (1 - params.c) * d * r)
    if level == VL:
        Ri = Ri + params.penalty
    return RewardBreakdown(R0=R0, Ri=Ri)


def _noisy_symbol(true_symbol: int, eta: float, rng: np.random.Generator) -> int:
    if eta == 0.0:
        return true_symbol
    u = rng.random()
    if u < 1.0 - eta:
        return true_symbol
    # one of the two wrong symbols, each with probability eta/2
    return (true_symbol + (1 if u < 1.0 - eta / 2 else 2)) % 3


def emission_probs(true_symbol: int, eta: float) -> np.ndarray:
    p = np.full(3, eta / 2)
    p[true_symbol] = 1.0 - eta
    return p


def reset(params: DomainParams, rng: np.random.Generator | None = None) -> OrgState:
    if params.start == "uniform":
        if rng is None:
            raise ValueError("uniform start needs a random generator")
        return OrgState(int(rng.integers(len(LEVELS))), 0.0)
    return OrgState(LEVELS.index(params.start), 0.0)


def observe_level(level: int, params: DomainParams, rng: np.random.Generator) -> int:
    return _noisy_symbol(int(LEVEL_SYMBOL[level]), params.public_noise, rng)


def step(state: OrgState, actions: Sequence, params: DomainParams, rng: np.random.Generator) -> StepResult:
    acts = [action_index(a) for a in actions]
    if len(acts) != params.n_agents:
        raise ValueError(f"expected {params.n_agents} actions, got {len(acts)}")
    outcome = resolve_joint(acts)
    base = base_rewards(state.level, acts, params)
    bonus = params.phi * state.s_r
    breakdown = RewardBreakdown(R0=base.R0, Ri=base.Ri, bonus=bonus)
    new_level = transition_level(state.level, outcome)
    s_r = base.team_total + bonus
    o_f = observe_level(new_level, params, rng)

    n = len(acts)
    private = np.full((n, n), -1, dtype=int)
    for i in range(n):
        for j in range(n):
            if i != j:
                private[i, j] = _noisy_symbol(acts[j], params.private_noise, rng)
    return StepResult(
        state=OrgState(new_level, s_r),
        public=PublicObs(o_f, s_r),
        private=private,
        rewards=breakdown.per_agent(),
        breakdown=breakdown,
    )


class OrgEnv:
    """Stateful convenience wrapper around :func:`reset` / :func:`step`."""

    def __init__(self, params: DomainParams, seed=None):
        self.params = params
        self.rng = np.random.default_rng(seed)
        self.state = None

    def reset(self) -> tuple[OrgState, PublicObs]:
        self.state = reset(self.params, self.rng)
        return self.state, PublicObs(observe_level(self.state.level, self.params, self.rng), 0.0)

    def step(self, actions) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        result = step(self.state, actions, self.params, self.rng)
        self.state = result.state
        return result


def all_joint_actions(n_agents: int):
    return itertools.product(range(3), repeat=n_agents)


# --- vectorised twin -------------------------------------------------------


def _noisy_symbols(true_symbols: np.ndarray, eta: float, rng: np.random.Generator) -> np.ndarray:
    if eta == 0.0:
        return true_symbols.copy()
    u = rng.random(true_symbols.shape)
    shift = np.where(u < 1.0 - eta, 0, np.where(u < 1.0 - eta / 2, 1, 2))
    return (true_symbols + shift) % 3


def reset_batch(params: DomainParams, batch: int, rng: np.random.Generator):
    """Start levels, s_r and initial public symbols for ``batch`` parallel episodes."""
    if params.start == "uniform":
        levels = rng.integers(len(LEVELS), size=batch)
    else:
        levels = np.full(batch, LEVELS.index(params.start))
    o_f = _noisy_symbols(LEVEL_SYMBOL[levels], params.public_noise, rng)
    return levels, np.zeros(batch), o_f


def step_batch(levels: np.ndarray, s_r: np.ndarray, actions: np.ndarray, params: DomainParams,
               rng: np.random.Generator):
    """Advance ``B`` independent episodes by one step.

    ``actions`` has shape (B, n). Returns new levels, new s_r (= o_r), public
    symbols (B,), private observations (B, n, n) and per-agent rewards (B, n).
    """
    n = actions.shape[1]
    n_self = np.sum(actions == SELF, axis=1)
    n_group = np.sum(actions == GROUP, axis=1)
    n_bal = n - n_self - n_group
    d, r = params.d, params.r

    Ri = np.where(actions == SELF, params.beta * r, 0.0) + np.where(actions == BALANCE, params.c * d * r, 0.0)
    Ri = Ri + np.where(levels == VL, params.penalty, 0.0)[:, None]
    R0 = n_group * r + n_bal * (1 - params.c) * d * r
    bonus = params.phi * s_r
    rewards = R0[:, None] + Ri + bonus[:, None]
    new_s_r = Ri.sum(axis=1) + R0 + bonus

    delta = np.where(n_self > n_group, -1, np.where(n_self < n_group, np.where(n_group == n, 2, 1), 0))
    new_levels = np.clip(levels + delta, 0, len(LEVELS) - 1)
    o_f = _noisy_symbols(LEVEL_SYMBOL[new_levels], params.public_noise, rng)
    seen = np.broadcast_to(actions[:, None, :], (actions.shape[0], n, n))
    private = _noisy_symbols(seen, params.private_noise, rng)
    private[:, np.arange(n), np.arange(n)] = -1
    return new_levels, new_s_r, o_f, private, rewards
