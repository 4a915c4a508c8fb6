"""Catalog of the multistable vector fields studied by the pipeline.

Every field is vectorized: it takes an ``(m, d)`` array of states and returns
the ``(m, d)`` array of velocities.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from dataclasses import field as dc_field
from importlib import resources
from typing import Callable

import numpy as np

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class HyperRectangle:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape or lower.size < 1:
            raise ValueError("lower/upper must be 1-d vectors of equal length")
        if not np.all(lower < upper):
            raise ValueError(f"degenerate box: {lower} !< {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    def inflate(self, factor: float) -> "HyperRectangle":
        half = 0.5 * factor * self.widths
        return HyperRectangle(self.center - half, self.center + half)

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lower - tol) & (points <= self.upper + tol), axis=1)

    def corners(self) -> np.ndarray:
        d = self.dim
        bits = (np.arange(2**d)[:, None] >> np.arange(d)) & 1
        return np.where(bits == 1, self.upper, self.lower)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass
class SystemSpec:
    """A named vector field on a box, with its parameters."""

    name: str
    dim: int
    domain: HyperRectangle
    field: Callable[[np.ndarray], np.ndarray] = dc_field(repr=False)
    params: dict = dc_field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.dim < 1 or self.domain.dim != self.dim:
            raise ValueError(f"{self.name}: domain dimension {self.domain.dim} != {self.dim}")


def eval_field(sys: SystemSpec, x) -> np.ndarray:
    """Evaluate the vector field at one point ``(d,)`` or a batch ``(m, d)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[-1] != sys.dim:
        raise ValueError(f"{sys.name} expects points of length {sys.dim}, got {pts.shape[-1]}")
    out = sys.field(pts)
    return out[0] if single else out


# -- Hill kernels -------------------------------------------------------------

def hill_neg(y, lo, up, theta, n):
    """Decreasing Hill function, equals ``lo + (up - lo)/2`` at ``y = theta``."""
    tn = np.power(theta, n)
    return lo + (up - lo) * tn / (np.power(y, n) + tn)


def hill_pos(y, lo, up, theta, n):
    """Increasing Hill function."""
    yn = np.power(y, n)
    return lo + (up - lo) * yn / (yn + np.power(theta, n))


def _hill_field(L, U, Theta, sign, gamma, n):
    # entry [j, i] describes the action of x_j on the production of x_i
    edges = [(j, i, int(sign[j, i])) for j, i in zip(*np.nonzero(sign))]

    def f(x):
        prod = np.ones_like(x)
        for j, i, s in edges:
            kernel = hill_pos if s > 0 else hill_neg
            prod[:, i] *= kernel(x[:, j], L[j, i], U[j, i], Theta[j, i], n)
        return -gamma * x + prod

    return f


def load_hill_params(path_or_name: str) -> dict:
    """Load a Hill parameter file; bare names resolve to the shipped fixtures."""
    if path_or_name.endswith(".json"):
        with open(path_or_name) as fh:
            raw = json.load(fh)
    else:
        text = resources.files("mlcd.data").joinpath(f"{path_or_name}.json").read_text()
        raw = json.loads(text)
    params = {k: np.asarray(raw[k], dtype=float) for k in ("L", "U", "Theta", "sign", "gamma")}
    params["n"] = float(raw["n"])
    params["lower"] = np.asarray(raw["lower"], dtype=float)
    params["upper"] = np.asarray(raw["upper"], dtype=float)
    params["name"] = raw.get("name", path_or_name)
    return params


def hill_system(params: dict) -> SystemSpec:
    L, U, Theta, sign = (params[k] for k in ("L", "U", "Theta", "sign"))
    gamma, n = params["gamma"], params["n"]
    pattern = sign != 0
    for M in (L, U, Theta):
        if np.any((M != 0) & ~pattern):
            raise ValueError("Hill matrices must share the sparsity pattern of the sign matrix")
    if n <= 0 or np.any(gamma <= 0):
        raise ValueError("Hill exponent and decay rates must be positive")
    d = L.shape[0]
    domain = HyperRectangle(params["lower"], params["upper"])
    return SystemSpec(params["name"], d, domain, _hill_field(L, U, Theta, sign, gamma, n), params)


# -- planar and radial examples ------------------------------------------------

def _linear_separatrix(x):
    # the field is posed in the rotated frame (u, v) and pushed back to (x, y);
    # the invariant line u = 0 separates the two basins
    X, Y = x[:, 0], x[:, 1]
    u = 0.5 * X + 0.5 * SQRT3 * Y
    v = 0.5 * Y - 0.5 * SQRT3 * X
    du = u * (1 - u**2)
    dv = u**2 * (3 - 2 * u**2) - v
    return np.column_stack([0.5 * du - 0.5 * SQRT3 * dv, 0.5 * SQRT3 * du + 0.5 * dv])


def _radial_rate(roots):
    """Return r -> rdot/r for rdot = -r * prod(r - root)."""
    roots = tuple(float(c) for c in roots)

    def g(r):
        out = -np.ones_like(r)
        for c in roots:
            out = out * (r - c)
        return out

    return g


def _rotating_radial_field(rate, dim):
    # radial flow in |y| plus unit-speed rotation in the (y1, y2) plane
    def f(y):
        r = np.linalg.norm(y, axis=1)
        out = rate(r)[:, None] * y
        out[:, 0] -= y[:, 1]
        out[:, 1] += y[:, 0]
        return out

    return f


def _nonlinear_separatrix(x):
    x1, x2 = x[:, 0], x[:, 1]
    return np.column_stack([-x1, (x2 - x1**2) * (9 - x2**2), -x[:, 2], -x[:, 3]])


def ellipsoid_transform(dim: int) -> np.ndarray:
    """45 degree rotation composed with diag(1, 0.5) in the (x1, x2) plane."""
    c = np.sqrt(0.5)
    T = np.eye(dim)
    T[:2, :2] = np.array([[c, -c], [c, c]]) @ np.diag([1.0, 0.5])
    return T


def transformed_system(name, base: Callable, T: np.ndarray, box: HyperRectangle, params=None):
    """Push a field forward through x = T y; the domain is the bounding box of T(box)."""
    if abs(np.linalg.det(T)) <= 1e-12:
        raise ValueError("transform must be invertible")
    Tinv = np.linalg.inv(T)

    def f(x):
        return base(x @ Tinv.T) @ T.T

    img = box.corners() @ T.T
    domain = HyperRectangle(img.min(axis=0), img.max(axis=0))
    return SystemSpec(name, T.shape[0], domain, f, {"T": T, **(params or {})})


def linear_separatrix() -> SystemSpec:
    return SystemSpec("linear_separatrix", 2, HyperRectangle([-2, -3.5], [2, 3.5]),
                      _linear_separatrix)


def radial_bistable() -> SystemSpec:
    rate = _radial_rate([1, 2, 3])
    return SystemSpec("radial_bistable", 2, HyperRectangle([-4, -4], [4, 4]),
                      _rotating_radial_field(rate, 2), {"roots": [0, 1, 2, 3]})


def radial_tristable() -> SystemSpec:
    rate = _radial_rate([1, 2, 3, 4])
    return SystemSpec("radial_tristable", 2, HyperRectangle([-5, -5], [5, 5]),
                      _rotating_radial_field(rate, 2), {"roots": [0, 1, 2, 3, 4]})


def nonlinear_separatrix() -> SystemSpec:
    return SystemSpec("nonlinear_separatrix", 4,
                      HyperRectangle([-2, -3.5, -2, -2], [2, 3.5, 2, 2]), _nonlinear_separatrix)


def ellipsoidal(dim: int) -> SystemSpec:
    if dim < 2:
        raise ValueError("ellipsoidal family needs dim >= 2")
    base = _rotating_radial_field(_radial_rate([1, 2, 3]), dim)
    box = HyperRectangle(-4 * np.ones(dim), 4 * np.ones(dim))
    return transformed_system(f"ellipsoidal_{dim}", base, ellipsoid_transform(dim), box,
                              {"roots": [0, 1, 2, 3]})


def linear_decay(dim: int = 1) -> SystemSpec:
    """xdot = -x; used to check the integrator against the exponential."""
    return SystemSpec("linear_decay", dim, HyperRectangle(-np.ones(dim), np.ones(dim)),
                      lambda x: -x)


_CATALOG: dict[str, Callable[[], SystemSpec]] = {
    "linear_separatrix": linear_separatrix,
    "radial_bistable": radial_bistable,
    "radial_tristable": radial_tristable,
    "nonlinear_separatrix": nonlinear_separatrix,
    "hill_po": lambda: hill_system(load_hill_params("hill_po")),
    "emt": lambda: hill_system(load_hill_params("emt")),
    "linear_decay": linear_decay,
}
for _d in (2, 3, 4, 5):
    _CATALOG[f"ellipsoidal_{_d}"] = (lambda d: (lambda: ellipsoidal(d)))(_d)


def system_names() -> list[str]:
    return sorted(_CATALOG)


def get_system(name: str) -> SystemSpec:
    try:
        return _CATALOG[name]()
    except KeyError:
        raise KeyError(f"unknown system {name!r}; known: {', '.join(system_names())}") from None
