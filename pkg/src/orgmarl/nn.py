"""One-hidden-layer tanh networks with hand-written backprop and Adam.

The actor is a softmax over the three actions; the critic is a linear head
(9 joint-action values, or 3 for the independent baseline). Gradients are
checked against central differences by :func:`grad_check`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class DenseNet:
    W1: np.ndarray  # (hidden, in)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (out, hidden)
    b2: np.ndarray  # (out,)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.W1.shape[1], self.W1.shape[0], self.W2.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2]

    def copy(self) -> "DenseNet":
        return DenseNet(*(p.copy() for p in self.params()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def init_net(n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator) -> DenseNet:
    """Uniform fan-in initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    k1, k2 = 1 / np.sqrt(n_in), 1 / np.sqrt(n_hidden)
    return DenseNet(
        W1=rng.uniform(-k1, k1, (n_hidden, n_in)),
        b1=rng.uniform(-k1, k1, n_hidden),
        W2=rng.uniform(-k2, k2, (n_out, n_hidden)),
        b2=rng.uniform(-k2, k2, n_out),
    )


def zeros_like(net: DenseNet) -> DenseNet:
    return DenseNet(*(np.zeros_like(p) for p in net.params()))


@dataclass
class Cache:
    x: np.ndarray
    h: np.ndarray


def forward(net: DenseNet, x: np.ndarray) -> tuple[np.ndarray, Cache]:
    """Raw output layer for a single input (in,) or a batch (B, in)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.W1.shape[1]:
        raise ValueError(f"input has {x.shape[-1]} features, net expects {net.W1.shape[1]}")
    h = np.tanh(x @ net.W1.T + net.b1)
    return h @ net.W2.T + net.b2, Cache(x, h)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward_actor(net: DenseNet, x: np.ndarray) -> np.ndarray:
    return softmax(forward(net, x)[0])


def forward_critic(net: DenseNet, x: np.ndarray) -> np.ndarray:
    return forward(net, x)[0]


def backward(net: DenseNet, cache: Cache, grad_out: np.ndarray) -> DenseNet:
    """Parameter gradients given dLoss/d(output layer) for the cached forward pass."""
    x, h, g = cache.x, cache.h, np.asarray(grad_out, dtype=float)
    if x.ndim == 1:
        x, h, g = x[None], h[None], g[None]
    dW2 = g.T @ h
    db2 = g.sum(axis=0)
    dz = (g @ net.W2) * (1.0 - h**2)
    dW1 = dz.T @ x
    db1 = dz.sum(axis=0)
    return DenseNet(dW1, db1, dW2, db2)


# --- losses used by the learners (value + gradient wrt the output layer) -------


def policy_loss_grad(logits: np.ndarray, actions: np.ndarray, advantages: np.ndarray,
                     entropy_coeff: float = 0.0):
    """Loss ``-mean(log pi(a|x) * A) - c * mean(H(pi(.|x)))`` and its logit gradient.

    ``logits`` is (n, k) or has extra leading dims, in which case the loss is an array.
    """
    n = len(actions)
    logp = log_softmax(logits)
    p = np.exp(logp)
    onehot = np.eye(logits.shape[-1])[actions]
    entropy = -np.sum(p * logp, axis=-1)
    chosen = np.sum(logp * onehot, axis=-1)
    loss = -np.mean(chosen * advantages, axis=-1) - entropy_coeff * np.mean(entropy, axis=-1)
    g = -(onehot - p) * advantages[:, None] / n
    # dH/dz_k = -p_k (log p_k + H)
    g += entropy_coeff * p * (logp + entropy[..., None]) / n
    return _scalar(loss), g


def critic_loss_grad(q: np.ndarray, index: np.ndarray, targets: np.ndarray):
    """Mean squared advantage with targets held fixed; gradient flows through Q[index] only."""
    n = len(index)
    onehot = np.eye(q.shape[-1])[index]
    adv = targets - np.sum(q * onehot, axis=-1)
    g = onehot * (-2.0 * adv / n)[..., None]
    return _scalar(np.mean(adv**2, axis=-1)), g


def _scalar(loss):
    return float(loss) if np.ndim(loss) == 0 else loss


# --- optimiser ----------------------------------------------------------------


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(net: DenseNet, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState([np.zeros_like(p) for p in net.params()], [np.zeros_like(p) for p in net.params()],
                     0, lr, beta1, beta2, eps)


def adam_step(net: DenseNet, grads: DenseNet, state: AdamState) -> tuple[DenseNet, AdamState]:
    for name, g in zip(PARAM_NAMES, grads.params()):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name} at optimiser step {state.t + 1}")
    t = state.t + 1
    new_params, ms, vs = [], [], []
    for p, g, m, v in zip(net.params(), grads.params(), state.m, state.v):
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        mhat = m / (1 - state.beta1**t)
        vhat = v / (1 - state.beta2**t)
        new_params.append(p - state.lr * mhat / (np.sqrt(vhat) + state.eps))
        ms.append(m)
        vs.append(v)
    return DenseNet(*new_params), AdamState(ms, vs, t, state.lr, state.beta1, state.beta2, state.eps)


# --- gradient checking --------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    n_params: int
    worst: str = ""

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def _rel_error(a, numeric):
    return np.abs(a - numeric) / np.maximum(np.abs(a) + np.abs(numeric), 1e-8)


def grad_check(params: list[np.ndarray], loss_and_grad, tolerance: float = 1e-4, h: float = 1e-5,
               names=None) -> GradCheckReport:
    """Compare analytic gradients with central differences, entry by entry.

    ``loss_and_grad()`` must read ``params`` in place and return (loss, grads).
    If it carries a ``perturbed`` attribute, ``perturbed(j, h)`` must return the
    losses with each entry of ``params[j]`` moved by +h and by -h, as two flat
    arrays; the check is then vectorized. Relative error is
    ``|a - n| / max(|a| + |n|, 1e-8)``.
    """
    names = names or [f"p{k}" for k in range(len(params))]
    perturbed = getattr(loss_and_grad, "perturbed", None)
    _, analytic = loss_and_grad()
    worst, worst_name, count = 0.0, "", 0
    for j, (name, p, a) in enumerate(zip(names, params, analytic)):
        a = np.asarray(a, dtype=float).reshape(-1)
        if perturbed is not None:
            up, down = perturbed(j, h)
        else:
            flat = p.reshape(-1)
            up, down = np.empty(flat.size), np.empty(flat.size)
            for k in range(flat.size):
                old = flat[k]
                flat[k] = old + h
                up[k] = loss_and_grad()[0]
                flat[k] = old - h
                down[k] = loss_and_grad()[0]
                flat[k] = old
        err = _rel_error(a, (up - down) / (2 * h))
        count += err.size
        k = int(np.argmax(err))
        if err[k] > worst:
            worst, worst_name = float(err[k]), f"{name}[{k}]"
    return GradCheckReport(worst, tolerance, count, worst_name)


def forward_stacked(params, x: np.ndarray) -> np.ndarray:
    """Output layer for parameters that may carry one leading stack dim, (K, B, out)."""
    W1, b1, W2, b2 = params
    h = np.tanh(np.einsum("...hi,bi->...bh", W1, x) + b1[..., None, :])
    return np.einsum("...oh,...bh->...bo", W2, h) + b2[..., None, :]


def net_loss_checker(net: DenseNet, x: np.ndarray, output_loss):
    """Wrap an output-layer loss ``output_loss(out) -> (loss, dL/dout)`` for :func:`grad_check`.

    ``output_loss`` must accept outputs with one extra leading dim and then
    return one loss per stacked copy.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None]

    def loss_and_grad():
        out, cache = forward(net, x)
        loss, g = output_loss(out)
        return loss, backward(net, cache, g).params()

    def perturbed(j, h):
        base = net.params()
        size = base[j].size
        eye = np.eye(size).reshape((size,) + base[j].shape)
        losses = []
        for sign in (1.0, -1.0):
            stacked = list(base)
            stacked[j] = base[j][None] + sign * h * eye
            losses.append(np.asarray(output_loss(forward_stacked(stacked, x))[0]))
        return losses[0], losses[1]

    loss_and_grad.perturbed = perturbed
    return net.params(), loss_and_grad


# --- serialisation ------------------------------------------------------------


def to_vector(net: DenseNet) -> np.ndarray:
    """Flat parameter vector: W1 row-major, b1, W2 row-major, b2."""
    return np.concatenate([p.reshape(-1) for p in net.params()])


def from_vector(vec: np.ndarray, n_in: int, n_hidden: int, n_out: int) -> DenseNet:
    sizes = [n_hidden * n_in, n_hidden, n_out * n_hidden, n_out]
    if len(vec) != sum(sizes):
        raise ValueError(f"vector has {len(vec)} entries, expected {sum(sizes)}")
    parts = np.split(np.asarray(vec, dtype=float), np.cumsum(sizes)[:-1])
    return DenseNet(parts[0].reshape(n_hidden, n_in), parts[1], parts[2].reshape(n_out, n_hidden), parts[3])


def dumps(net: DenseNet) -> str:
    n_in, n_hidden, n_out = net.shape
    body = "\n".join(repr(float(v)) for v in to_vector(net))
    return f"densenet {n_in} {n_hidden} {n_out}\n{body}\n"


def loads(text: str) -> DenseNet:
    lines = text.strip().splitlines()
    head = lines[0].split()
    if len(head) != 4 or head[0] != "densenet":
        raise ValueError(f"bad snapshot header: {lines[0]!r}")
    n_in, n_hidden, n_out = map(int, head[1:])
    return from_vector(np.array([float(v) for v in lines[1:]]), n_in, n_hidden, n_out)
