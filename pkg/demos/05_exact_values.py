"""
Exact values of fixed joint policies
====================================

Per-symbol policies (one action for each public symbol) are evaluated exactly
on the noiseless core, and all 27 x 27 joint policies are enumerated to find
the best team value. The always-group and always-balance policies are
compared against it.
"""
import time

from orgmarl import oracle as O
from orgmarl.env import DomainParams

params = DomainParams()
t = time.time()
best = O.enumerate_best(params, H=20, gamma=0.95)
print(f"enumerated {best.evaluated} joint policies in {time.time() - t:.2f}s")
for i, p in enumerate(best.policies):
    print(f"agent {i}: {O.policy_name(p)}")

v = O.value_triple(params, 20, 0.95, best=best)
print(f"optimal {v.optimal:.3f} > balance only {v.balance_only:.3f} > group only {v.group_only:.3f}")

# %% Trajectory of the optimum
res = O.evaluate_joint(best.policies, params, 8, 0.95)
for level, category, team, bonus in res.trajectory:
    print(f"level {level}  category {category}  team base {team:6.3f}  bonus {bonus:6.3f}")

# %% Certification gaps
for pols in ([("group",) * 3] * 2, [("balance",) * 3] * 2, best.policies):
    rep = O.certify(pols, params, 20, 0.95, best=best)
    print(f"{rep.status:>10} gap {rep.gap:.4f}  {O.policy_name(rep.policies[0])}")

# %% How the optimum moves with phi
for phi in (0.3, 0.5, 0.7, 0.9):
    b = O.enumerate_best(params.replace(phi=phi), 20, 0.95)
    print(f"phi {phi}: {O.policy_name(b.policies[0])}  /  {O.policy_name(b.policies[1])}")
