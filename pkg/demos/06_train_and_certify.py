"""
Training the three learners and certifying what they learned
============================================================

IA2C+ (belief filter and reward readout), IA2C- (no readout) and IAC (no
filter) are trained with the same budget. The greedy policy of each run is
coarsened to one action per public symbol and compared with the enumerated
optimum. Pass a smaller episode count on the command line for a quick look.
"""
import sys
import time

import numpy as np

from orgmarl import learners as L
from orgmarl import oracle as O
from orgmarl.config import RunConfig

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 20000
base = RunConfig(episodes=episodes)
best = O.enumerate_best(base.domain(), 20, 0.95)

for algo in ("ia2c+", "ia2c-", "iac"):
    t = time.time()
    res = L.train(base.replace(algo=algo, seed=0))
    rep, tables = L.certify_learners(res.learners, base.domain(), 20, best)
    late = res.records[-1000:]
    ret = np.mean([np.mean(r.returns) for r in late])
    print(f"{algo:6s} {res.status:9s} {res.episodes} episodes in {time.time() - t:.0f}s, "
          f"late mean return {ret:.1f}, {rep.status} (gap {rep.gap:.3f})")
    for i, p in enumerate(rep.policies):
        print("        agent", i, O.policy_name(p))
