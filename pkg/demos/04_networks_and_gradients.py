"""
Actor and critic networks with hand-written gradients
=====================================================

One tanh hidden layer, a softmax actor and a linear critic head. Gradients
are compared with central differences before anything is trained.
"""
import numpy as np

from orgmarl import nn

rng = np.random.default_rng(0)
actor = nn.init_net(7, 32, 3, rng)
critic = nn.init_net(7, 32, 9, rng)
x = rng.normal(size=(4, 7))
print("policy rows sum to", nn.forward_actor(actor, x).sum(axis=1))

# %% Gradient check on the two training losses
a, adv = rng.integers(3, size=4), rng.normal(size=4)
params, fn = nn.net_loss_checker(actor, x, lambda out: nn.policy_loss_grad(out, a, adv, 0.01))
print("actor ", nn.grad_check(params, fn, 1e-4, names=list(nn.PARAM_NAMES)))
idx, target = rng.integers(9, size=4), rng.normal(size=4)
params, fn = nn.net_loss_checker(critic, x, lambda out: nn.critic_loss_grad(out, idx, target))
print("critic", nn.grad_check(params, fn, 1e-4, names=list(nn.PARAM_NAMES)))

# %% A deliberately wrong gradient (scaled by 1.01) is caught
def corrupted():
    loss, grads = fn()
    return loss, [g * 1.01 for g in grads]

print("corrupted", nn.grad_check(params, corrupted, 1e-4).passed)

# %% Adam on f(w) = w^2
net = nn.DenseNet(np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), np.array([1.0]))
state = nn.adam_init(net)
for step in range(1, 3001):
    g = nn.zeros_like(net)
    g.b2[:] = 2 * net.b2
    net, state = nn.adam_step(net, g, state)
    if abs(net.b2[0]) < 0.01:
        print("|w| < 0.01 after", step, "steps")
        break

# %% Snapshots are plain text with a shape header
text = nn.dumps(critic)
print(text.splitlines()[0], "...", len(text.splitlines()) - 1, "values")
