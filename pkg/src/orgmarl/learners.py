"""IA2C+ and its two ablations, trained on lock-step batches of episodes.

* ``ia2c+``: actor and joint-action critic Q(x, a_i, a_j) over the window and
  reward-readout features; the opponent's action comes from the model-belief
  filter.
* ``ia2c-``: the same, with the reward-readout feature forced to zero.
* ``iac``: no filter; the critic only indexes the agent's own action.

The advantage of a transition is ``r + gamma * Q(x', a_i', a_j') - Q(x, a_i, a_j)``;
the critic minimises its mean square and the actor follows
``mean(grad log pi(a_i|x) * A)`` plus an entropy bonus.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import belief as B
from . import env as E
from . import models as M
from . import nn
from .config import RunConfig
from .oracle import BestResult, certify, enumerate_best

log = logging.getLogger(__name__)

N_FEATURES = 7


class TrainingDiverged(RuntimeError):
    pass


def encode(prev: np.ndarray, cur: np.ndarray, o_r: np.ndarray, params: E.DomainParams,
           use_o_r: bool = True) -> np.ndarray:
    """Features: one-hot(previous symbol), one-hot(current symbol), scaled reward readout."""
    prev, cur, o_r = np.atleast_1d(prev), np.atleast_1d(cur), np.atleast_1d(np.asarray(o_r, dtype=float))
    x = np.zeros((len(cur), N_FEATURES))
    x[np.arange(len(cur)), prev] = 1.0
    x[np.arange(len(cur)), 3 + cur] = 1.0
    if use_o_r:
        x[:, 6] = np.clip(o_r * (1.0 - params.phi) / params.max_step_reward(), -1.0, 1.0)
    return x


def majority_category(predicted: np.ndarray) -> np.ndarray:
    """Joint category (self/balance/group) of each row of predicted opponent actions."""
    n_self = np.sum(predicted == E.SELF, axis=-1)
    n_group = np.sum(predicted == E.GROUP, axis=-1)
    return np.where(n_self > n_group, E.SELF, np.where(n_self < n_group, E.GROUP, E.BALANCE))


class Learner:
    """One agent's actor, critic, optimisers and filter settings."""

    def __init__(self, kind: str, params: E.DomainParams, cfg: RunConfig, rng: np.random.Generator):
        self.kind = kind
        self.params = params
        self.cfg = cfg
        self.uses_filter = kind != "iac"
        self.uses_o_r = kind != "ia2c-"
        n_q = 9 if self.uses_filter else 3
        self.actor = nn.init_net(N_FEATURES, cfg.hidden, 3, rng)
        self.critic = nn.init_net(N_FEATURES, cfg.hidden, n_q, rng)
        self.actor_opt = nn.adam_init(self.actor, lr=cfg.actor_lr)
        self.critic_opt = nn.adam_init(self.critic, lr=cfg.critic_lr)
        self.model_ids = np.arange(M.N_MODELS)

    def features(self, prev, cur, o_r) -> np.ndarray:
        return encode(prev, cur, o_r, self.params, self.uses_o_r)

    def policy(self, x: np.ndarray) -> np.ndarray:
        return nn.forward_actor(self.actor, x)

    def sample(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        p = self.policy(x)
        u = rng.random(len(p))
        return np.minimum(np.sum(np.cumsum(p, axis=1) <= u[:, None], axis=1), 2)

    def q_index(self, a: np.ndarray, ahat: np.ndarray) -> np.ndarray:
        if not self.uses_filter:
            return a
        return 3 * a + ahat

    def greedy_table(self, o_r_by_window: np.ndarray | None = None) -> np.ndarray:
        """Greedy action per window (3x3, [prev, cur]); ties go to the lower action index."""
        prev, cur = np.divmod(np.arange(9), 3)
        o_r = np.zeros(9) if o_r_by_window is None else np.asarray(o_r_by_window).reshape(-1)
        return np.argmax(self.policy(self.features(prev, cur, o_r)), axis=1).reshape(3, 3)


@dataclass
class AgentBatch:
    """Transitions of one agent from a batch rollout, shaped (T, B, ...)."""

    x: np.ndarray
    a: np.ndarray
    ahat: np.ndarray  # (T, B, n-1) predicted opponent actions; -1 when no filter
    reward: np.ndarray
    x_next: np.ndarray
    a_next: np.ndarray
    ahat_next: np.ndarray
    done: np.ndarray
    # (T, B, n-1) true opponent actions, for prediction accuracy
    opp_actions: np.ndarray


@dataclass
class Rollout:
    agents: list
    levels: np.ndarray  # (T+1, B)
    s_r: np.ndarray  # (T+1, B)
    actions: np.ndarray  # (T, B, n)
    symbols: np.ndarray  # (T+1, B)
    belief_resets: int = 0

    @property
    def returns(self) -> np.ndarray:
        """Undiscounted per-episode return of every agent, (B, n)."""
        return np.stack([ag.reward.sum(axis=0) for ag in self.agents], axis=1)

    def prediction_hits(self, i: int) -> np.ndarray:
        """(T, B, n-1) boolean: predicted opponent action equals the true one."""
        ag = self.agents[i]
        return ag.ahat == ag.opp_actions


def run_batch(params: E.DomainParams, learners: list, horizon: int, rng: np.random.Generator,
              batch: int = 1, predict_mode: str = "sample", belief_floor: float = B.EPS_FLOOR,
              bootstrap_at_horizon: bool = True, opponents=None) -> Rollout:
    """Roll out ``batch`` episodes in lock-step.

    ``opponents`` optionally maps a seat index to a scripted model id; that seat
    then plays the model's table instead of a learner (its entry in ``learners``
    is ignored).
    """
    n = params.n_agents
    opponents = opponents or {}
    levels, s_r, sym = E.reset_batch(params, batch, rng)
    prev, cur = sym.copy(), sym.copy()
    widx = 3 * prev + cur
    others = [[j for j in range(n) if j != i] for i in range(n)]

    beliefs = {}
    for i, lr in enumerate(learners):
        if i in opponents or not lr.uses_filter:
            continue
        for j in others[i]:
            beliefs[i, j] = np.full((batch, len(lr.model_ids)), 1.0 / len(lr.model_ids))

    def predict_all():
        out = {}
        for (i, j), w in beliefs.items():
            out[i, j] = B.predict_batch(w, widx, learners[i].model_ids, rng, predict_mode)[1]
        return out

    def act(x_by_agent):
        acts = np.zeros((batch, n), dtype=int)
        for i in range(n):
            if i in opponents:
                acts[:, i] = M.ACTION_MATRIX[opponents[i]][widx]
            else:
                acts[:, i] = learners[i].sample(x_by_agent[i], rng)
        return acts

    def feats():
        return [None if i in opponents else learners[i].features(prev, cur, s_r) for i in range(n)]

    T = horizon
    rec = {i: {k: [] for k in ("x", "a", "ahat", "reward", "x_next", "a_next", "ahat_next", "opp")}
           for i in range(n) if i not in opponents}
    lev_hist, sr_hist, sym_hist, act_hist = [levels.copy()], [s_r.copy()], [cur.copy()], []
    resets = 0

    x = feats()
    ahat = predict_all()
    acts = act(x)
    for t in range(T):
        levels, s_r, o_f, private, rewards = E.step_batch(levels, s_r, acts, params, rng)
        act_hist.append(acts)
        for (i, j), w in beliefs.items():
            w, reset = B.correct_batch(w, widx, learners[i].model_ids, private[:, i, j],
                                       params.private_noise, belief_floor)
            beliefs[i, j] = w
            resets += int(reset.sum())
        prev, cur = cur, o_f
        widx = 3 * prev + cur
        lev_hist.append(levels.copy())
        sr_hist.append(s_r.copy())
        sym_hist.append(cur.copy())

        x_next = feats()
        ahat_next = predict_all()
        acts_next = act(x_next)
        for i, r in rec.items():
            r["x"].append(x[i])
            r["a"].append(acts[:, i])
            r["reward"].append(rewards[:, i])
            r["x_next"].append(x_next[i])
            r["a_next"].append(acts_next[:, i])
            r["opp"].append(acts[:, others[i]])
            if learners[i].uses_filter:
                r["ahat"].append(np.stack([ahat[i, j] for j in others[i]], axis=1))
                r["ahat_next"].append(np.stack([ahat_next[i, j] for j in others[i]], axis=1))
            else:
                r["ahat"].append(np.full((batch, n - 1), -1))
                r["ahat_next"].append(np.full((batch, n - 1), -1))
        x, ahat, acts = x_next, ahat_next, acts_next

    agents = []
    for i in range(n):
        if i not in rec:
            agents.append(None)
            continue
        r = rec[i]
        done = np.zeros((T, batch), dtype=bool)
        if not bootstrap_at_horizon:
            done[-1] = True
        agents.append(AgentBatch(
            x=np.stack(r["x"]), a=np.stack(r["a"]), ahat=np.stack(r["ahat"]), reward=np.stack(r["reward"]),
            x_next=np.stack(r["x_next"]), a_next=np.stack(r["a_next"]), ahat_next=np.stack(r["ahat_next"]),
            done=done, opp_actions=np.stack(r["opp"]),
        ))
    return Rollout(agents, np.stack(lev_hist), np.stack(sr_hist), np.stack(act_hist), np.stack(sym_hist), resets)


def run_episode(params: E.DomainParams, learners: list, horizon: int, rng: np.random.Generator, **kwargs) -> Rollout:
    return run_batch(params, learners, horizon, rng, batch=1, **kwargs)


# --- estimators -----------------------------------------------------------------


def _flatten(ag: AgentBatch):
    T, Bn = ag.a.shape
    return (ag.x.reshape(T * Bn, -1), ag.a.reshape(-1), ag.ahat.reshape(T * Bn, -1), ag.reward.reshape(-1),
            ag.x_next.reshape(T * Bn, -1), ag.a_next.reshape(-1), ag.ahat_next.reshape(T * Bn, -1),
            ag.done.reshape(-1))


def critic_indices(learner: Learner, a: np.ndarray, ahat: np.ndarray) -> np.ndarray:
    if not learner.uses_filter:
        return a
    other = ahat[:, 0] if ahat.shape[1] == 1 else majority_category(ahat)
    return learner.q_index(a, other)


def advantage(learner: Learner, x, idx, reward, x_next, idx_next, done, gamma: float) -> np.ndarray:
    """``r + gamma * Q(x', idx') - Q(x, idx)``, bootstrap dropped on terminal samples."""
    q = nn.forward_critic(learner.critic, x)
    q_next = nn.forward_critic(learner.critic, x_next)
    n = len(idx)
    boot = np.where(done, 0.0, q_next[np.arange(n), idx_next])
    return reward + gamma * boot - q[np.arange(n), idx]


def critic_update(learner: Learner, x, idx, targets) -> float:
    """One optimiser step on mean squared advantage; returns the pre-step loss."""
    q, cache = nn.forward(learner.critic, x)
    loss, g = nn.critic_loss_grad(q, idx, targets)
    if not np.isfinite(loss):
        raise TrainingDiverged(f"critic loss is {loss}")
    grads = nn.backward(learner.critic, cache, g)
    learner.critic, learner.critic_opt = nn.adam_step(learner.critic, grads, learner.critic_opt)
    return loss


def actor_update(learner: Learner, x, a, adv, entropy_coeff: float) -> float:
    """One optimiser step ascending mean(log pi * A) + entropy bonus; returns the mean entropy."""
    logits, cache = nn.forward(learner.actor, x)
    _, g = nn.policy_loss_grad(logits, a, adv, entropy_coeff)
    grads = nn.backward(learner.actor, cache, g)
    learner.actor, learner.actor_opt = nn.adam_step(learner.actor, grads, learner.actor_opt)
    p = nn.softmax(logits)
    return float(np.mean(-np.sum(p * np.log(p + 1e-300), axis=1)))


def update(learner: Learner, ag: AgentBatch, gamma: float, reward_scale: float, entropy_coeff: float,
           n_updates: int = 1) -> tuple[float, float]:
    x, a, ahat, r, xn, an, ahn, done = _flatten(ag)
    idx = critic_indices(learner, a, ahat)
    idx_next = critic_indices(learner, an, ahn)
    r = r * reward_scale
    loss = entropy = 0.0
    for k in range(n_updates):
        adv = advantage(learner, x, idx, r, xn, idx_next, done, gamma)
        targets = adv + nn.forward_critic(learner.critic, x)[np.arange(len(idx)), idx]
        step_loss = critic_update(learner, x, idx, targets)
        step_entropy = actor_update(learner, x, a, adv, entropy_coeff)
        if k == 0:
            loss, entropy = step_loss, step_entropy
    return loss, entropy


# --- training loop ----------------------------------------------------------------


@dataclass
class EpisodeRecord:
    episode: int
    returns: list
    critic_loss: list
    entropy: list
    accuracy: list
    fingerprint: str

    def to_dict(self) -> dict:
        return {
            "episode": self.episode,
            "returns": self.returns,
            "critic_loss": self.critic_loss,
            "entropy": self.entropy,
            "prediction_accuracy": self.accuracy,
            "policy": self.fingerprint,
        }


@dataclass
class TrainResult:
    learners: list
    records: list = field(default_factory=list)
    status: str = "budget"
    episodes: int = 0
    converged_at: int | None = None
    message: str = ""


def fingerprint(learners: list, o_r_by_window=None) -> str:
    """Greedy action letter per window for every agent, e.g. ``bbbsbbggg|...``."""
    letters = "sbg"
    return "|".join("".join(letters[a] for a in lr.greedy_table(o_r_by_window).reshape(-1)) for lr in learners)


def _window_o_r(rollout: Rollout) -> np.ndarray:
    """Mean reward readout seen at each window during a rollout (0 where unseen)."""
    prev, cur = rollout.symbols[:-1], rollout.symbols[1:]
    widx = (3 * prev + cur).reshape(-1)
    o_r = rollout.s_r[1:].reshape(-1)
    counts = np.bincount(widx, minlength=9)
    sums = np.bincount(widx, weights=o_r, minlength=9)
    return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)


def make_learners(cfg: RunConfig, rng_seed=None) -> list:
    params = cfg.domain()
    seq = np.random.SeedSequence(cfg.seed if rng_seed is None else rng_seed)
    children = seq.spawn(params.n_agents)
    return [Learner(kind, params, cfg, np.random.default_rng(ch)) for kind, ch in zip(cfg.seats(), children)]


def train(cfg: RunConfig, callback=None, learners: list | None = None) -> TrainResult:
    """Train every seat with its configured learner until the episode budget or convergence.

    Episodes run in lock-step batches of ``cfg.batch``; each batch gives one
    critic and one actor update per agent (``cfg.updates_per_batch`` steps).
    Convergence means every critic loss stayed below ``cfg.convergence_loss``
    and the greedy-policy fingerprint did not change for ``cfg.convergence_window``
    episodes. ``callback(record)`` is called once per episode.
    """
    params = cfg.domain()
    learners = learners or make_learners(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(params.n_agents + 1)[-1])
    result = TrainResult(learners)
    n_batches = -(-cfg.episodes // cfg.batch)
    stable_since = None
    last_fp = None
    episode = 0
    for b in range(n_batches):
        frac = b / max(n_batches - 1, 1)
        ent = cfg.entropy_start + (cfg.entropy_end - cfg.entropy_start) * frac
        size = min(cfg.batch, cfg.episodes - episode)
        ro = run_batch(params, learners, cfg.horizon, rng, size, cfg.predict_mode, cfg.belief_floor,
                       cfg.bootstrap_at_horizon)
        losses, entropies = [], []
        try:
            for lr, ag in zip(learners, ro.agents):
                loss, entropy = update(lr, ag, params.gamma, cfg.reward_scale, ent, cfg.updates_per_batch)
                if loss > cfg.divergence_loss:
                    raise TrainingDiverged(f"critic loss {loss:.3g} exceeds {cfg.divergence_loss:g}")
                losses.append(loss)
                entropies.append(entropy)
        except (TrainingDiverged, FloatingPointError) as exc:
            result.status = "diverged"
            result.message = str(exc)
            log.warning("run %s diverged at episode %d: %s", cfg.name, episode, exc)
            break

        fp = fingerprint(learners, _window_o_r(ro))
        rets = ro.returns
        accs = []
        for i, lr in enumerate(learners):
            if lr.uses_filter:
                accs.append(ro.prediction_hits(i).mean(axis=(0, 2)))
            else:
                accs.append(np.full(size, np.nan))
        for k in range(size):
            rec = EpisodeRecord(
                episode=episode,
                returns=[float(v) for v in rets[k]],
                critic_loss=[float(v) for v in losses],
                entropy=[float(v) for v in entropies],
                accuracy=[None if np.isnan(a[k]) else float(a[k]) for a in accs],
                fingerprint=fp,
            )
            result.records.append(rec)
            if callback:
                callback(rec)
            episode += 1

        calm = max(losses) < cfg.convergence_loss
        if not calm:
            stable_since = None
        elif stable_since is None or fp != last_fp:
            stable_since = episode - size
        if stable_since is not None and episode - stable_since >= cfg.convergence_window:
            result.status = "converged"
            result.converged_at = stable_since
            last_fp = fp
            break
        last_fp = fp
    result.episodes = episode
    return result


# --- greedy extraction and certification ---------------------------------------------


def greedy_rollout(learners: list, params: E.DomainParams, horizon: int):
    """Deterministic greedy play on the noiseless core; returns per-agent window tables and visit counts."""
    n = params.n_agents
    state = E.reset(params.replace(start=params.start if params.start != "uniform" else "m"))
    sym = int(E.LEVEL_SYMBOL[state.level])
    prev = sym
    votes = np.zeros((n, 9, 3))
    visits = np.zeros(9)
    for _ in range(horizon):
        w = 3 * prev + sym
        acts = []
        for i, lr in enumerate(learners):
            p = lr.policy(lr.features(np.array([prev]), np.array([sym]), np.array([state.s_r])))[0]
            a = int(np.argmax(p))
            votes[i, w, a] += 1
            acts.append(a)
        visits[w] += 1
        outcome = E.resolve_joint(acts)
        base = E.base_rewards(state.level, acts, params)
        s_r = base.team_total + params.phi * state.s_r
        state = E.OrgState(E.transition_level(state.level, outcome), s_r)
        prev, sym = sym, int(E.LEVEL_SYMBOL[state.level])
    tables = []
    for i, lr in enumerate(learners):
        table = lr.greedy_table().reshape(-1)
        seen = visits > 0
        table[seen] = np.argmax(votes[i, seen], axis=1)
        tables.append(table.reshape(3, 3))
    return tables, visits.reshape(3, 3)


def coarsen_visited(table: np.ndarray, visits: np.ndarray) -> tuple:
    """Per-symbol policy: majority over visited windows of each symbol, else over all windows."""
    from .oracle import coarsen

    out = list(coarsen(table))
    for cur in range(3):
        col = visits[:, cur]
        if col.sum() > 0:
            counts = np.bincount(table[:, cur], weights=col, minlength=3)
            out[cur] = int(np.argmax(counts))
    return tuple(out)


def certify_learners(learners: list, params: E.DomainParams, horizon: int = 20, best: BestResult | None = None):
    """Certify the learners' greedy joint policy against the enumerated optimum."""
    tables, visits = greedy_rollout(learners, params, horizon)
    coarse = [coarsen_visited(t, visits) for t in tables]
    best = best or enumerate_best(params, horizon)
    return certify(coarse, params, horizon, best=best), tables
