"""
Tracking an opponent with a finite set of models
================================================

Five candidate models map the last two public symbols to an action. The
filter weights them by how well they explain the noisy private observations
and predicts the opponent's next action from the mixture.
"""
import numpy as np

from orgmarl import belief as B
from orgmarl import models as M
from orgmarl.env import ACTIONS

print(M.table_dump())

# %% A scripted opponent that follows model 3, observed through 20% noise
rng = np.random.default_rng(0)
eta = 0.2
window = M.ObsWindow.blank().shift(1)
belief, models = B.ModelBelief.uniform(window=window), M.make_models(window=window)
hits = []
rows = []
for step in range(30):
    true_action = M.model_action(M.OpponentModel(3, belief.window))
    pred = B.predict(belief, models, rng)
    hits.append((pred.sample, true_action))
    observed = true_action if rng.random() < 1 - eta else (true_action + rng.integers(1, 3)) % 3
    belief = B.correct(belief, models, observed, eta)
    rows.append((step, belief.weights, pred.sample, true_action))
    belief, models = B.advance(belief, models, rng.integers(3))
    if step % 5 == 4:
        print(f"step {step + 1:2d}: weights {np.round(belief.weights, 3)}")

print("prediction accuracy over the last 20 steps:", B.prediction_accuracy(hits[10:]))

# %% The recursive filter equals the brute-force product of likelihoods (floor off)
keys = []
obs = []
w = M.ObsWindow(0, 0)
for _ in range(10):
    keys.append(w.key)
    obs.append(int(rng.integers(3)))
    w = w.shift(rng.integers(3))
b, ms = B.ModelBelief.uniform(window=M.ObsWindow(*keys[0])), M.make_models(window=M.ObsWindow(*keys[0]))
for k, o in enumerate(obs):
    b = B.correct(b, ms, o, eta, floor=0.0)
    if k + 1 < len(obs):
        b, ms = B.advance(b, ms, keys[k + 1][1])
print("filter     ", np.round(b.weights, 6))
print("brute force", np.round(B.posterior_bruteforce(obs, keys, eta), 6))
print("last predicted action:", ACTIONS[rows[-1][2]])
