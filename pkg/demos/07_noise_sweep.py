"""
How much private noise can IA2C+ tolerate?
==========================================

Each private-noise level trains a few seeds and counts how many reach the
optimum. Runs are spread over worker processes (capped by ORGMARL_WORKERS);
the merged result does not depend on the number of workers.
"""
import sys

from orgmarl import harness
from orgmarl.config import RunConfig

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 5
episodes = int(sys.argv[2]) if len(sys.argv) > 2 else 20000
levels = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]

result = harness.sweep_noise(RunConfig(episodes=episodes), levels, runs=runs, out_dir="runs/noise_sweep")
print(result.summary_csv())
for lv, count in zip(levels, result.counts()):
    print(f"{lv:.1f} {'#' * count}{'.' * (runs - count)}")
