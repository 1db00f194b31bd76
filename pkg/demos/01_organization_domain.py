"""
The organization domain, one step at a time
===========================================

Two employees share a firm whose health moves between five levels. Each step
they pick self, balance or group; the majority outcome moves the level and
pays shared and private rewards, and a bonus carries part of the previous
step's team total forward.
"""
import numpy as np

from orgmarl import env as E

params = E.DomainParams()
print(params)
print("d =", params.d, " largest |team reward| in one step =", params.max_step_reward())

# %% Joint outcomes: the category is a vote between self and group counts
for acts in (["self", "group"], ["group", "group"], ["balance", "self"]):
    print(acts, "->", E.resolve_joint(acts))

# %% Base rewards at a few levels
for level, acts in (("m", ["group", "group"]), ("h", ["balance", "balance"]), ("vl", ["self", "self"])):
    b = E.base_rewards(level, acts, params)
    print(f"{level:>2} {acts}: R0 = {b.R0}, Ri = {b.Ri}")

# %% A short scripted episode. The bonus is phi times the previous team total.
env = E.OrgEnv(params, seed=0)
state = env.reset()
script = [["group", "group"], ["group", "group"], ["self", "self"], ["balance", "balance"], ["self", "balance"]]
for acts in script:
    res = env.step(acts)
    print(f"{E.LEVELS[res.state.level]:>2}  public={E.SYMBOLS[res.public.o_f]:<7} "
          f"rewards={np.round(res.rewards, 3)}  bonus={res.breakdown.bonus:.3f}  "
          f"private seen by agent 0: {E.ACTIONS[res.private[0, 1]]}")

# %% Private observations are noisy copies of the other agent's action
rng = np.random.default_rng(1)
seen = E._noisy_symbols(np.full(100_000, E.GROUP), params.private_noise, rng)
print("observed frequencies when the other plays group:", np.bincount(seen, minlength=3) / len(seen))
