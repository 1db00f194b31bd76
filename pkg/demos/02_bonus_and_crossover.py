"""
Why the bonus matters: two reward streams and the phi crossover
===============================================================

A selfish stream and a balanced stream are compared once the bonus (a share
phi of the previous total) is added. For a fixed beta the winner can change
with phi alone, at every horizon from 4 to 20.
"""
import numpy as np

from orgmarl import oracle as O

beta, r, phi, d = 3.0, 1.0, 0.5, 9 / 4
x0, x1 = O.pi0_rewards(4, beta, r), O.pi1_rewards(4, beta, d, r)
print("selfish stream ", x0, "total", O.bonus_accumulate(x0, phi)[0])
print("balanced stream", x1, "total", O.bonus_accumulate(x1, phi)[0])
print("closed forms   ", O.pi0_total_h4(beta, r, phi), O.pi1_total_h4(beta, r, phi, d))

# %% Each base reward is carried forward with weight 1 + phi + ... + phi^(H - t)
print("weights at H=4, phi=0.5:", O.bonus_weights(4, 0.5))

# %% Sign grid over (beta, phi) and the betas where phi decides the winner
betas = np.round(np.arange(2.3, 10.0001, 0.01), 2)
phis = np.round(np.arange(0.01, 0.995, 0.01), 2)
for H in range(4, 21):
    grid = O.policy_crossover(betas, phis, H, d)
    flip = betas[grid.flips]
    print(f"H={H:2d}: phi flips the winner for beta in [{flip.min():.2f}, {flip.max():.2f}]")

# %% A small text rendering of the H=4 surface ('0' selfish wins, '1' balanced wins)
grid = O.policy_crossover(np.arange(3.0, 5.01, 0.25), np.arange(0.1, 0.95, 0.1), 4, d)
for b, row in zip(grid.betas, grid.sign):
    print(f"beta {b:4.2f} ", "".join("0" if s > 0 else "1" if s < 0 else "=" for s in row))
