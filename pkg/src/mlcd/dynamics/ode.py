"""Batched adaptive Dormand-Prince 5(4) integration of the time-1 map.

Each trajectory carries its own step size; all active trajectories advance
together so one call integrates thousands of initial conditions with numpy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .systems import SystemSpec

# Dormand-Prince tableau (Hairer, Norsett & Wanner, Table 5.2)
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_LOW

RTOL = 1e-8
ATOL = 1e-10


class IntegrationError(RuntimeError):
    pass


def _rms_error(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return np.sqrt(np.mean((err / scale) ** 2, axis=1))


def _initial_step(f, y, f0, rtol, atol):
    # Hairer's starting step heuristic, per trajectory
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2, axis=1))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2, axis=1))
    h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / np.maximum(d1, 1e-300))
    f1 = f(y + h0[:, None] * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2, axis=1)) / h0
    dmax = np.maximum(d1, d2)
    h1 = np.where(dmax <= 1e-15, np.maximum(1e-6, h0 * 1e-3),
                  (0.01 / np.maximum(dmax, 1e-300)) ** (1 / 5))
    return np.minimum(100 * h0, h1)


def integrate(f, y0, t_end: float, *, rtol=RTOL, atol=ATOL, guard=None,
              max_steps=1_000_000):
    """Integrate ``y' = f(y)`` from 0 to ``t_end`` for a batch ``y0`` of shape ``(m, d)``.

    With a ``guard`` box, a trajectory is stopped at its first accepted step
    outside the box. Returns ``(y, escaped)``.
    """
    y = np.array(y0, dtype=float, copy=True)
    m = y.shape[0]
    t = np.zeros(m)
    escaped = np.zeros(m, dtype=bool)
    if m == 0:
        return y, escaped
    f0 = f(y)
    if not np.all(np.isfinite(f0)):
        raise IntegrationError("non-finite field value at initial state")
    h = np.minimum(_initial_step(f, y, f0, rtol, atol), t_end)
    k_first = f0
    active = np.arange(m)
    for _ in range(max_steps):
        if active.size == 0:
            break
        ya, ta, ha = y[active], t[active], h[active]
        ha = np.minimum(ha, t_end - ta)
        K = [k_first[active]]
        for s in range(1, 7):
            inc = sum(a * K[j] for j, a in enumerate(_A[s]) if a != 0.0)
            K.append(f(ya + ha[:, None] * inc))
        y_new = ya + ha[:, None] * sum(b * K[j] for j, b in enumerate(_B) if b != 0.0)
        err = ha[:, None] * sum(e * K[j] for j, e in enumerate(_E) if e != 0.0)
        en = _rms_error(err, ya, y_new, rtol, atol)
        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(en)
        accept = finite & (en <= 1.0)
        factor = np.where(en == 0, 5.0, np.clip(0.9 * np.maximum(en, 1e-300) ** -0.2, 0.2, 5.0))
        factor = np.where(finite, factor, 0.1)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))

        idx = active[accept]
        y[idx] = y_new[accept]
        t[idx] = ta[accept] + ha[accept]
        k_first[idx] = K[6][accept]  # first-same-as-last
        h[active] = ha * factor
        if np.any(h[active] < 1e-14 * max(t_end, 1.0)):
            raise IntegrationError("step size underflow (non-finite or stiff field)")
        if guard is not None and idx.size:
            escaped[idx[~guard.contains(y[idx])]] = True
        active = active[(t[active] < t_end * (1 - 1e-14)) & ~escaped[active]]
    else:
        raise IntegrationError("maximum number of steps exceeded")
    return y, escaped


@dataclass
class OrbitEnsemble:
    """Iterates of the time-1 map: ``snapshots[i][j]`` is ``f_1^i(initial[j])``."""

    snapshots: np.ndarray  # (I + 1, m, d)
    escaped: np.ndarray  # (m,) bool

    @property
    def initial(self) -> np.ndarray:
        return self.snapshots[0]

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    @property
    def horizon(self) -> int:
        return self.snapshots.shape[0] - 1

    def to_csv(self, path):
        I1, m, d = self.snapshots.shape
        it = np.repeat(np.arange(I1), m)
        ids = np.tile(np.arange(m), I1)
        table = np.column_stack([it, ids, self.snapshots.reshape(-1, d)])
        header = ",".join(["iter", "id"] + [f"x{i + 1}" for i in range(d)])
        fmt = ["%d", "%d"] + ["%.17g"] * d
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt=fmt)

    @classmethod
    def from_csv(cls, path) -> "OrbitEnsemble":
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        it, ids = table[:, 0].astype(int), table[:, 1].astype(int)
        I1, m, d = it.max() + 1, ids.max() + 1, table.shape[1] - 2
        snaps = np.empty((I1, m, d))
        snaps[it, ids] = table[:, 2:]
        return cls(snaps, np.zeros(m, dtype=bool))


def iterate_time1(sys: SystemSpec, points, horizon: int, *, rtol=RTOL, atol=ATOL,
                  escape_factor: float = 2.0) -> OrbitEnsemble:
    """Apply the numerical time-1 map ``horizon`` times to every point.

    Orbits that leave the domain inflated by ``escape_factor`` are frozen at
    their position at the start of that iterate and flagged as escaped.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != sys.dim:
        raise ValueError(f"points must have {sys.dim} columns")
    guard = sys.domain.inflate(escape_factor)
    m = pts.shape[0]
    snaps = np.empty((horizon + 1, m, sys.dim))
    snaps[0] = pts
    escaped = np.zeros(m, dtype=bool)
    for i in range(horizon):
        live = np.flatnonzero(~escaped)
        cur = snaps[i].copy()
        if live.size:
            y, out = integrate(sys.field, cur[live], 1.0, rtol=rtol, atol=atol, guard=guard)
            keep = live[~out]
            cur[keep] = y[~out]
            escaped[live[out]] = True
        snaps[i + 1] = cur
    return OrbitEnsemble(snaps, escaped)
