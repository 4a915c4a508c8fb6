"""Single-hidden-layer HardTanh regression network with grouped hidden rows.

The hidden weight matrix has ``d`` groups of ``q`` identical rows. Instead of
projecting a full matrix after every update, the network stores one direction
vector per group, so the constraint holds by construction and the gradient of
a direction is the sum of the gradients of its ``q`` rows.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics.systems import HyperRectangle
from .labeling import LabeledDataset


def hardtanh(a: float, b: float, x):
    if a > b:
        raise ValueError("hardtanh needs a <= b")
    return np.clip(x, a, b)


@dataclass
class ConstrainedNet:
    directions: np.ndarray  # (d, d), row i is the normal shared by group i
    offsets: np.ndarray  # (d, q)
    out_weights: np.ndarray  # (d, q); flattened row-major this is w of length p = q d
    num_labels: int

    def __post_init__(self):
        self.directions = np.asarray(self.directions, dtype=float)
        self.offsets = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        self.out_weights = np.asarray(self.out_weights, dtype=float).reshape(self.offsets.shape)
        d = self.directions.shape[0]
        if self.directions.shape != (d, d) or self.offsets.shape[0] != d:
            raise ValueError("directions must be (d, d) and offsets (d, q)")

    @property
    def d(self) -> int:
        return self.directions.shape[0]

    @property
    def q(self) -> int:
        return self.offsets.shape[1]

    @property
    def p(self) -> int:
        return self.d * self.q

    @property
    def upper(self) -> float:
        return float(self.num_labels - 1)

    def weight_matrix(self) -> np.ndarray:
        """The ``(p, d)`` hidden matrix with rows ``(i-1)q+1 .. iq`` equal to direction i."""
        return np.repeat(self.directions, self.q, axis=0)

    def hidden_bias(self) -> np.ndarray:
        return self.offsets.reshape(-1)

    def copy(self) -> "ConstrainedNet":
        return ConstrainedNet(self.directions.copy(), self.offsets.copy(),
                              self.out_weights.copy(), self.num_labels)

    def to_dict(self) -> dict:
        return {"d": self.d, "q": self.q, "L": self.num_labels,
                "directions": self.directions.tolist(), "offsets": self.offsets.tolist(),
                "out_weights": self.out_weights.reshape(-1).tolist()}

    @classmethod
    def from_dict(cls, raw: dict) -> "ConstrainedNet":
        d, q = int(raw["d"]), int(raw["q"])
        return cls(np.reshape(raw["directions"], (d, d)), np.reshape(raw["offsets"], (d, q)),
                   np.reshape(raw["out_weights"], (d, q)), int(raw["L"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "ConstrainedNet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _hidden(net: ConstrainedNet, X):
    z = X @ net.directions.T  # (m, d)
    pre = z[:, :, None] + net.offsets[None]  # (m, d, q)
    return pre, np.clip(pre, 0.0, 1.0)


def forward(net: ConstrainedNet, x) -> np.ndarray:
    """Network output for one point (returns a float) or a batch (returns ``(m,)``)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    _, h = _hidden(net, np.atleast_2d(x))
    s = np.einsum("mdq,dq->m", h, net.out_weights)
    out = np.clip(s, 0.0, net.upper)
    return float(out[0]) if single else out


def per_direction_terms(net: ConstrainedNet, x) -> np.ndarray:
    """The 1-D pieces ``f_i(<u_i, x>)`` whose clamped sum is the network output."""
    _, h = _hidden(net, np.atleast_2d(np.asarray(x, dtype=float)))
    return np.einsum("mdq,dq->md", h, net.out_weights)


def init_constrained(domain: HyperRectangle, q: int, num_labels: int, seed) -> ConstrainedNet:
    """Axis-aligned directions; zero-level kinks uniform inside the domain's extent."""
    if q < 1:
        raise ValueError("q must be >= 1")
    rng = np.random.default_rng(seed)
    d = domain.dim
    offsets = -rng.uniform(domain.lower[:, None], domain.upper[:, None], size=(d, q))
    bound = 1.0 / np.sqrt(q * d)
    w = rng.uniform(-bound, bound, size=(d, q))
    return ConstrainedNet(np.eye(d), offsets, w, num_labels)


def loss_and_grad(net: ConstrainedNet, X, y, need_grad: bool = True):
    """Mean squared error and its gradient w.r.t. (directions, offsets, out_weights).

    Both clamps use subgradient 1 on their closed identity interval.
    """
    pre, h = _hidden(net, X)
    s = np.einsum("mdq,dq->m", h, net.out_weights)
    F = np.clip(s, 0.0, net.upper)
    r = F - y
    loss = float(np.mean(r * r))
    if not need_grad:
        return loss, None
    m = X.shape[0]
    ds = (2.0 / m) * r * ((s >= 0.0) & (s <= net.upper))
    g_w = np.einsum("m,mdq->dq", ds, h)
    dpre = ds[:, None, None] * net.out_weights[None] * ((pre >= 0.0) & (pre <= 1.0))
    g_b = dpre.sum(axis=0)
    g_u = dpre.sum(axis=2).T @ X
    return loss, (g_u, g_b, g_w)


def mse(net: ConstrainedNet, X, y) -> float:
    return loss_and_grad(net, X, y, need_grad=False)[0]


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batchsize: int = 1000
    max_epochs: int = 100
    patience: int = 10
    convergence_ratio: float = 0.1
    seed: int = 0
    test_fraction: float = 0.5

    def __post_init__(self):
        if min(self.learning_rate, self.batchsize, self.max_epochs, self.patience) <= 0:
            raise ValueError("training hyperparameters must be positive")
        if not 0 < self.convergence_ratio < 1:
            raise ValueError("convergence_ratio must lie in (0, 1)")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")


@dataclass
class TrainResult:
    net: ConstrainedNet
    train_losses: list = field(default_factory=list)
    test_losses: list = field(default_factory=list)
    converged: bool = False
    spans: bool = False
    error: str | None = None

    @property
    def final_test_loss(self) -> float:
        return self.test_losses[-1] if self.test_losses else float("nan")


class Adam:
    def __init__(self, shapes, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def split(data: LabeledDataset, test_fraction: float, seed):
    """Seeded random train/test split; returns ``(train, test)``."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(data.labels.size)
    n_test = int(round(test_fraction * perm.size))
    return data.subset(np.sort(perm[n_test:])), data.subset(np.sort(perm[:n_test]))


def check_convergence(train_losses, beta: float) -> bool:
    """Relative reduction between first and last epoch is at least ``beta``."""
    if len(train_losses) < 2:
        return False
    first, last = float(train_losses[0]), float(train_losses[-1])
    if first == 0.0:
        return True
    # the tolerance keeps exact-boundary reductions (e.g. 1.0 -> 0.9 at 0.1) on the >= side
    return (first - last) / first >= beta - 1e-12


def check_span(net: ConstrainedNet, rtol: float = 1e-9) -> bool:
    sv = np.linalg.svd(net.directions, compute_uv=False)
    return bool(sv[0] > 0 and sv[-1] > rtol * sv[0])


def _should_stop(test_losses, rho: int) -> bool:
    t = len(test_losses) - 1
    if t < rho:
        return False
    recent = np.mean(test_losses[t - rho + 1: t + 1])
    previous = np.mean(test_losses[t - rho: t])
    return bool(recent >= previous)


def train(net: ConstrainedNet, train_set: LabeledDataset, test_set: LabeledDataset,
          cfg: TrainConfig) -> TrainResult:
    """Adam on mini-batches of the MSE, with moving-average early stopping."""
    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    Xtr, ytr = train_set.points, train_set.labels.astype(float)
    Xte, yte = test_set.points, test_set.labels.astype(float)
    params = [net.directions, net.offsets, net.out_weights]
    opt = Adam([p.shape for p in params], lr=cfg.learning_rate)
    result = TrainResult(net)
    n = ytr.size
    for _ in range(cfg.max_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batchsize):
            idx = perm[start:start + cfg.batchsize]
            _, grads = loss_and_grad(net, Xtr[idx], ytr[idx])
            opt.step(params, grads)
        tr, te = mse(net, Xtr, ytr), mse(net, Xte, yte)
        if not (np.isfinite(tr) and np.isfinite(te)):
            result.error = "non-finite loss"
            result.spans = check_span(net) if np.all(np.isfinite(net.directions)) else False
            return result
        result.train_losses.append(tr)
        result.test_losses.append(te)
        if _should_stop(result.test_losses, cfg.patience):
            break
    result.converged = check_convergence(result.train_losses, cfg.convergence_ratio)
    result.spans = check_span(net)
    return result
