"""Exact, non-learned ground truth for the Organization domain.

Everything here is evaluated by direct enumeration: the bonus accumulator, the
two-policy crossover analysis, finite-horizon evaluation of fixed joint
policies, and exhaustive search over per-symbol policies. Learned policies are
certified against the enumerated optimum.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import env
from .env import LEVEL_SYMBOL, LEVELS, DomainParams

# evaluate_joint refuses to enumerate noisy public observations beyond this horizon
MAX_NOISY_HORIZON = 12
CERTIFY_TOLERANCE = 0.05


# --- bonus recursion --------------------------------------------------------


def bonus_accumulate(base_rewards, phi: float) -> tuple[float, np.ndarray]:
    """Total reward of a base-reward stream once the bonus is added.

    The bonus at step t is ``phi`` times the previous step's realised total
    (base plus bonus); the first step gets no bonus.
    """
    if not 0 <= phi < 1:
        raise ValueError(f"phi must be in [0, 1), got {phi}")
    xs = np.asarray(base_rewards, dtype=float)
    bonus = np.zeros(len(xs))
    for t in range(1, len(xs)):
        bonus[t] = phi * (xs[t - 1] + bonus[t - 1])
    return float(np.sum(xs + bonus)), bonus


def bonus_weights(H: int, phi) -> np.ndarray:
    """Multiplier of each base reward in the bonus-inclusive total, shape (H,) or (len(phi), H).

    A reward at step t is carried forward with factor phi per step, so its weight
    is ``1 + phi + ... + phi**(H - t)``.
    """
    phi = np.asarray(phi, dtype=float)
    k = H - np.arange(H)  # number of steps the reward contributes to
    return np.sum(phi[..., None, None] ** np.arange(H)[None, :] * (np.arange(H)[None, :] < k[:, None]), axis=-1)


def pi0_rewards(H: int, beta: float, r: float = 1.0) -> np.ndarray:
    """Base stream of the selfish policy: two ``beta*r`` steps, then ``r`` and ``beta*r`` alternate."""
    tail = [r if k % 2 == 0 else beta * r for k in range(max(H - 2, 0))]
    return np.array(([beta * r, beta * r] + tail)[:H], dtype=float)


def pi1_rewards(H: int, beta: float, d: float, r: float = 1.0) -> np.ndarray:
    """Base stream of the balanced policy: two ``beta*r`` steps, then ``d*r`` repeated."""
    return np.array(([beta * r, beta * r] + [d * r] * max(H - 2, 0))[:H], dtype=float)


def pi0_total_h4(beta, r, phi):
    return phi**3 * beta * r + 2 * phi**2 * beta * r + 2 * phi * beta * r + phi * r + 3 * beta * r + r


def pi1_total_h4(beta, r, phi, d):
    return phi**3 * beta * r + 2 * phi**2 * beta * r + 2 * phi * beta * r + phi * d * r + 2 * beta * r + 2 * d * r


@dataclass
class CrossoverGrid:
    betas: np.ndarray
    phis: np.ndarray
    H: int
    d: float
    # sign(total(pi0) - total(pi1)), shape (len(betas), len(phis))
    sign: np.ndarray

    @property
    def flips(self) -> np.ndarray:
        """Per beta: does varying phi alone change the winner?"""
        nz = self.sign != 0
        return np.array([len(set(row[m])) > 1 for row, m in zip(self.sign, nz)])

    def phi_is_deciding(self) -> bool:
        return bool(self.flips.any())

    def rows(self):
        for bi, beta in enumerate(self.betas):
            for pj, phi in enumerate(self.phis):
                s = self.sign[bi, pj]
                winner = "pi0" if s > 0 else "pi1" if s < 0 else "tie"
                yield float(beta), float(phi), self.H, winner


def policy_crossover(betas, phis, H: int, d: float = 9 / 4, r: float = 1.0) -> CrossoverGrid:
    if H < 4:
        raise ValueError("crossover analysis needs H >= 4")
    betas = np.asarray(betas, dtype=float)
    phis = np.asarray(phis, dtype=float)
    x0 = np.array([pi0_rewards(H, b, r) for b in betas])
    x1 = np.array([pi1_rewards(H, b, d, r) for b in betas])
    diff = (x0 - x1) @ bonus_weights(H, phis).T
    sign = np.where(np.abs(diff) < 1e-12, 0, np.sign(diff)).astype(int)
    return CrossoverGrid(betas, phis, H, d, sign)


# --- stationary joint policies ------------------------------------------------


def as_window_table(policy) -> np.ndarray:
    """Normalise a policy to a 3x3 table indexed [previous symbol, current symbol].

    Accepts a per-symbol table (3 actions) or a per-window table (3x3 or 9 flat,
    row-major in the previous symbol). Actions may be names or indices.
    """
    arr = np.asarray(policy, dtype=object)
    arr = np.vectorize(env.action_index, otypes=[int])(arr) if arr.size else arr.astype(int)
    if arr.shape == (3,):
        return np.tile(arr, (3, 1))
    if arr.shape == (9,):
        return arr.reshape(3, 3)
    if arr.shape == (3, 3):
        return arr
    raise ValueError(f"policy must have 3 or 9 entries, got shape {arr.shape}")


@dataclass
class EvalResult:
    per_agent: np.ndarray
    team: float
    # (level, joint category, base team total, bonus) per step; empty when averaged over branches
    trajectory: list = field(default_factory=list)


def _rollout(tables, params: DomainParams, H: int, gamma: float, level: int):
    n = len(tables)
    values = np.zeros(n)
    s_r = 0.0
    sym = int(LEVEL_SYMBOL[level])
    prev = sym
    discount = 1.0
    traj = []
    for _ in range(H):
        acts = [int(tab[prev, sym]) for tab in tables]
        outcome = env.resolve_joint(acts)
        base = env.base_rewards(level, acts, params)
        bonus = params.phi * s_r
        values += discount * (base.R0 + base.Ri + bonus)
        traj.append((level, outcome.category, base.team_total, bonus))
        s_r = base.team_total + bonus
        level = env.transition_level(level, outcome)
        prev, sym = sym, int(LEVEL_SYMBOL[level])
        discount *= gamma
    return values, traj


def _expected_noisy(tables, params, H, gamma, level):
    eta = params.public_noise
    n = len(tables)

    def emit(lvl):
        return env.emission_probs(int(LEVEL_SYMBOL[lvl]), eta)

    def recurse(t, lvl, s_r, prev, sym, discount):
        if t == H:
            return np.zeros(n)
        acts = [int(tab[prev, sym]) for tab in tables]
        outcome = env.resolve_joint(acts)
        base = env.base_rewards(lvl, acts, params)
        bonus = params.phi * s_r
        out = discount * (base.R0 + base.Ri + bonus)
        nxt = env.transition_level(lvl, outcome)
        if t + 1 < H:
            for o, p in enumerate(emit(nxt)):
                if p > 0:
                    out = out + p * recurse(t + 1, nxt, base.team_total + bonus, sym, o, discount * gamma)
        return out

    total = np.zeros(n)
    for o, p in enumerate(emit(level)):
        if p > 0:
            total += p * recurse(0, level, 0.0, o, o, 1.0)
    return total


def _start_levels(params: DomainParams, start):
    start = params.start if start is None else start
    if start == "uniform":
        return list(range(len(LEVELS))), True
    return [env.level_index(start)], False


def evaluate_joint(policies, params: DomainParams, H: int, gamma: float | None = None,
                   start=None) -> EvalResult:
    """Exact expected discounted returns of a fixed joint policy over ``H`` steps.

    With deterministic public observations this is a single rollout. With noisy
    ones every observation branch is enumerated, which is only allowed up to
    ``MAX_NOISY_HORIZON`` steps. A ``"uniform"`` start averages over all levels.
    """
    gamma = params.gamma if gamma is None else gamma
    tables = [as_window_table(p) for p in policies]
    if len(tables) != params.n_agents:
        raise ValueError(f"need {params.n_agents} policies, got {len(tables)}")
    levels, averaged = _start_levels(params, start)
    if params.public_noise > 0 and H > MAX_NOISY_HORIZON:
        raise ValueError(f"noisy evaluation limited to H <= {MAX_NOISY_HORIZON} (got {H})")

    per_agent = np.zeros(len(tables))
    traj = []
    for level in levels:
        if params.public_noise > 0:
            vals = _expected_noisy(tables, params, H, gamma, level)
        else:
            vals, traj = _rollout(tables, params, H, gamma, level)
        per_agent += vals / len(levels)
    if averaged or params.public_noise > 0:
        traj = []
    return EvalResult(per_agent=per_agent, team=float(per_agent.sum()), trajectory=traj)


def replay(action_sequence, params: DomainParams, start=None) -> np.ndarray:
    """Undiscounted per-agent totals of a scripted action sequence.

    Levels follow the transition rule; the bonus stream comes from
    :func:`bonus_accumulate` applied to the team base totals.
    """
    start = params.start if start is None else start
    level = env.level_index(start)
    own, team = [], []
    for acts in action_sequence:
        base = env.base_rewards(level, acts, params)
        own.append(base.R0 + base.Ri)
        team.append(base.team_total)
        level = env.transition_level(level, env.resolve_joint(acts))
    if not own:
        return np.zeros(params.n_agents)
    _, bonus = bonus_accumulate(team, params.phi)
    return np.sum(own, axis=0) + bonus.sum()


# --- exhaustive search ---------------------------------------------------------

SYMBOL_POLICIES = tuple(itertools.product(range(3), repeat=3))


def policy_name(policy) -> str:
    """Readable form of a per-symbol policy, e.g. ``meager:group several:balance many:self``."""
    return " ".join(f"{s}:{env.ACTIONS[a]}" for s, a in zip(env.SYMBOLS, policy))


@dataclass
class BestResult:
    policies: tuple
    team: float
    per_agent: np.ndarray
    # per agent: best unilateral per-symbol deviation gain in its own value (>= 0)
    deviation_gain: np.ndarray
    evaluated: int


def _team_value(policies, params, H, gamma, start):
    return evaluate_joint(policies, params, H, gamma, start)


def enumerate_best(params: DomainParams, H: int, gamma: float | None = None, start=None,
                   max_agents: int = 4) -> BestResult:
    """Best joint per-symbol policy by team value.

    Two agents are searched exhaustively (27**2 joint policies, lexicographic
    tie-breaking). Three or four agents start from the best symmetric policy and
    run best-response sweeps on the team value until no agent can improve it.
    """
    n = params.n_agents
    if n > max_agents:
        raise ValueError(f"per-symbol enumeration supports at most {max_agents} agents (got {n})")

    def better(v, best):
        return best is None or v > best + 1e-9 * max(1.0, abs(best))

    evaluated = 0
    best_pol, best_val, best_res = None, None, None
    if n == 2:
        candidates = itertools.product(SYMBOL_POLICIES, repeat=2)
        for joint in candidates:
            res = _team_value(joint, params, H, gamma, start)
            evaluated += 1
            if better(res.team, best_val):
                best_pol, best_val, best_res = joint, res.team, res
    else:
        for pol in SYMBOL_POLICIES:
            joint = (pol,) * n
            res = _team_value(joint, params, H, gamma, start)
            evaluated += 1
            if better(res.team, best_val):
                best_pol, best_val, best_res = joint, res.team, res
        improved = True
        while improved:
            improved = False
            for i in range(n):
                for pol in SYMBOL_POLICIES:
                    joint = best_pol[:i] + (pol,) + best_pol[i + 1:]
                    res = _team_value(joint, params, H, gamma, start)
                    evaluated += 1
                    if better(res.team, best_val):
                        best_pol, best_val, best_res = joint, res.team, res
                        improved = True

    gains = np.zeros(n)
    for i in range(n):
        own = best_res.per_agent[i]
        for pol in SYMBOL_POLICIES:
            joint = best_pol[:i] + (pol,) + best_pol[i + 1:]
            gains[i] = max(gains[i], _team_value(joint, params, H, gamma, start).per_agent[i] - own)
    return BestResult(best_pol, best_val, best_res.per_agent, gains, evaluated)


@dataclass
class ValueTriple:
    optimal: float
    group_only: float
    balance_only: float
    optimal_policies: tuple


def value_triple(params: DomainParams, H: int, gamma: float | None = None, start=None,
                 best: BestResult | None = None) -> ValueTriple:
    """Team values of the optimum, of everyone always grouping and of everyone always balancing."""
    best = best or enumerate_best(params, H, gamma, start)
    n = params.n_agents
    group = evaluate_joint([(env.GROUP,) * 3] * n, params, H, gamma, start).team
    balance = evaluate_joint([(env.BALANCE,) * 3] * n, params, H, gamma, start).team
    return ValueTriple(best.team, group, balance, best.policies)


# --- certification ---------------------------------------------------------------


def coarsen(policy) -> tuple:
    """Collapse a per-window table to one action per current symbol by majority vote.

    A three-way split is resolved by the window whose previous symbol equals the
    current one.
    """
    table = as_window_table(policy)
    out = []
    for cur in range(3):
        column = table[:, cur]
        counts = np.bincount(column, minlength=3)
        if counts.max() >= 2:
            out.append(int(np.argmax(counts)))
        else:
            out.append(int(table[cur, cur]))
    return tuple(out)


@dataclass
class CertifyReport:
    status: str
    gap: float
    value: float
    best_value: float
    policies: tuple
    best_policies: tuple

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "gap": self.gap,
            "value": self.value,
            "best_value": self.best_value,
            "policies": [policy_name(p) for p in self.policies],
            "best_policies": [policy_name(p) for p in self.best_policies],
        }


def certify(policies, params: DomainParams, H: int, gamma: float | None = None, start=None,
            best: BestResult | None = None, tolerance: float = CERTIFY_TOLERANCE) -> CertifyReport:
    best = best or enumerate_best(params, H, gamma, start)
    coarse = tuple(coarsen(p) for p in policies)
    value = evaluate_joint(coarse, params, H, gamma, start).team
    gap = (best.team - value) / abs(best.team)
    # the enumerated class contains every coarsened policy
    gap = max(gap, 0.0)
    status = "optimal" if gap <= tolerance else "suboptimal"
    return CertifyReport(status, float(gap), float(value), float(best.team), coarse, best.policies)
