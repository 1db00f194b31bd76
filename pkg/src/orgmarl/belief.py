"""Bayesian filter over the finite set of opponent models.

All models condition on the same public window, so their histories advance in
lock-step and the model posterior is just a weight vector: prediction mixes the
models' table actions, correction reweights each model by the likelihood of
the private observation given that model's action.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from . import models as M
from .env import ACTIONS

EPS_FLOOR = 1e-6


@dataclass(frozen=True)
class ModelBelief:
    weights: np.ndarray
    window: M.ObsWindow = M.ObsWindow.blank()
    # last public reward readout, rounded to one decimal and clamped to +-bound
    o_r: float = 0.0
    resets: int = 0

    @classmethod
    def uniform(cls, n_models: int = M.N_MODELS, window: M.ObsWindow | None = None) -> "ModelBelief":
        return cls(np.full(n_models, 1.0 / n_models), window or M.ObsWindow.blank())


@dataclass(frozen=True)
class PredictedAction:
    distribution: np.ndarray
    sample: int


def grid_o_r(o_r: float, bound: float) -> float:
    return float(np.clip(np.round(o_r, 1), -bound, bound))


def _model_actions(belief: ModelBelief, models) -> np.ndarray:
    if len(models) != len(belief.weights):
        raise ValueError("belief and model set sizes differ")
    for m in models:
        if m.window != belief.window:
            raise ValueError(f"model {m.id} history {m.window} out of sync with belief window {belief.window}")
    return np.array([M.model_action(m) for m in models])


def action_distribution(weights: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return np.bincount(actions, weights=weights, minlength=3)


def predict(belief: ModelBelief, models, rng: np.random.Generator | None = None,
            mode: str = "sample") -> PredictedAction:
    """Mixture of the models' actions; the opponent's action is sampled from it (or its argmax)."""
    dist = action_distribution(belief.weights, _model_actions(belief, models))
    if mode == "argmax":
        sample = int(np.argmax(dist))
    elif mode == "sample":
        if rng is None:
            raise ValueError("sampling a predicted action needs a random generator")
        sample = int(rng.choice(3, p=dist / dist.sum()))
    else:
        raise ValueError(f"unknown prediction mode {mode!r}")
    return PredictedAction(dist, sample)


def likelihood(observed: int, actions: np.ndarray, eta: float) -> np.ndarray:
    """P(private symbol | action) for each model's action."""
    return np.where(actions == observed, 1.0 - eta, eta / 2)


def _normalise(weights: np.ndarray, floor: float):
    total = weights.sum()
    if total <= 0:
        return np.full(len(weights), 1.0 / len(weights)), True
    weights = weights / total
    if floor > 0:
        weights = np.maximum(weights, floor)
        weights = weights / weights.sum()
    return weights, False


def correct(belief: ModelBelief, models, observed: int, eta: float, floor: float = EPS_FLOOR) -> ModelBelief:
    """Reweight by the private observation of the step the current window indexes.

    An all-zero posterior (only possible when ``eta == 0``) resets the belief to
    uniform and increments ``resets``.
    """
    actions = _model_actions(belief, models)
    weights, was_reset = _normalise(belief.weights * likelihood(int(observed), actions, eta), floor)
    return replace(belief, weights=weights, resets=belief.resets + int(was_reset))


def advance(belief: ModelBelief, models, symbol: int, o_r: float | None = None, bound: float = np.inf):
    """Shift every model history and the belief window by the new public symbol.

    Weights are carried over untouched. Returns the new belief and model tuple.
    """
    new_models = tuple(M.advance_history(m, symbol) for m in models)
    new_o_r = belief.o_r if o_r is None else grid_o_r(o_r, bound)
    return replace(belief, window=belief.window.shift(symbol), o_r=new_o_r), new_models


def prediction_accuracy(log) -> float:
    """Fraction of (predicted, true) pairs that agree."""
    pairs = list(log)
    if not pairs:
        raise ValueError("prediction log is empty")
    return sum(int(p) == int(t) for p, t in pairs) / len(pairs)


def posterior_bruteforce(observations, windows, eta: float, model_ids=range(M.N_MODELS)) -> np.ndarray:
    """Posterior over models from the product of per-step likelihoods (uniform prior, no floor)."""
    ids = list(model_ids)
    post = np.ones(len(ids))
    for obs, w in zip(observations, windows):
        for k, m in enumerate(ids):
            a = M.POLICY_TABLES[m][w]
            post[k] *= (1.0 - eta) if a == obs else eta / 2
    return post / post.sum()


def write_trajectory_csv(path, rows):
    """Rows of (step, weights, sampled action, true action) to CSV."""
    rows = list(rows)
    n = len(rows[0][1]) if rows else M.N_MODELS
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + [f"w{k}" for k in range(n)] + ["sampled", "true"])
        for step, weights, sampled, true in rows:
            writer.writerow([step] + [repr(float(w)) for w in weights] + [ACTIONS[sampled], ACTIONS[true]])


# --- batched filter used by the training loop ---------------------------------


def predict_batch(weights: np.ndarray, window_idx: np.ndarray, model_ids, rng: np.random.Generator,
                  mode: str = "sample") -> tuple[np.ndarray, np.ndarray]:
    """Distributions (B, 3) and predicted actions (B,) for B beliefs at once."""
    acts = M.ACTION_MATRIX[np.asarray(model_ids)][:, window_idx].T  # (B, n_models)
    dist = np.zeros((len(window_idx), 3))
    for a in range(3):
        dist[:, a] = np.sum(weights * (acts == a), axis=1)
    if mode == "argmax":
        return dist, np.argmax(dist, axis=1)
    cdf = np.cumsum(dist, axis=1)
    u = rng.random(len(window_idx)) * cdf[:, -1]
    return dist, np.minimum(np.sum(cdf <= u[:, None], axis=1), 2)


def correct_batch(weights: np.ndarray, window_idx: np.ndarray, model_ids, observed: np.ndarray,
                  eta: float, floor: float = EPS_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`correct`; returns new weights and a per-row reset flag."""
    acts = M.ACTION_MATRIX[np.asarray(model_ids)][:, window_idx].T
    post = weights * np.where(acts == observed[:, None], 1.0 - eta, eta / 2)
    total = post.sum(axis=1, keepdims=True)
    reset = total[:, 0] <= 0
    post = np.where(reset[:, None], 1.0 / weights.shape[1], post / np.where(reset, 1.0, total[:, 0])[:, None])
    if floor > 0:
        post = np.maximum(post, floor)
        post = post / post.sum(axis=1, keepdims=True)
    return post, reset
