"""Space-filling sampling of initial conditions and orbit stabilization checks."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .ode import OrbitEnsemble
from .systems import HyperRectangle


def latin_hypercube(domain: HyperRectangle, n: int, seed: int) -> np.ndarray:
    """``n`` Latin hypercube points in ``domain``: one point per slab on every axis."""
    if n < 1:
        raise ValueError("need at least one sample")
    unit = qmc.LatinHypercube(d=domain.dim, seed=np.random.default_rng(seed)).random(n)
    return domain.lower + unit * domain.widths


def hausdorff(A, B) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.size == 0 or B.size == 0:
        raise ValueError("Hausdorff distance of an empty set is undefined")
    if A.shape[1] != B.shape[1]:
        raise ValueError("point sets live in different dimensions")
    d_ab = cKDTree(B).query(A)[0].max()
    d_ba = cKDTree(A).query(B)[0].max()
    return float(max(d_ab, d_ba))


def hausdorff_profile(snapshots) -> np.ndarray:
    """Distances between consecutive iterates of the ensemble."""
    return np.array([hausdorff(snapshots[i], snapshots[i + 1])
                     for i in range(len(snapshots) - 1)])


def stabilization_index(ens: OrbitEnsemble | np.ndarray, tol: float | None = None):
    """Smallest ``i`` after which every consecutive distance stays ``<= tol``.

    ``tol`` defaults to 5% of the domain diameter, estimated here from the
    initial points' bounding box when only snapshots are given.
    """
    snaps = ens.snapshots if isinstance(ens, OrbitEnsemble) else np.asarray(ens)
    if len(snaps) < 3:
        raise ValueError("need a horizon of at least 2")
    if tol is None:
        first = snaps[0]
        tol = 0.05 * float(np.linalg.norm(first.max(axis=0) - first.min(axis=0)))
    dist = hausdorff_profile(snaps)
    above = np.flatnonzero(dist > tol)
    if above.size == 0:
        return 0
    idx = int(above[-1]) + 1
    return idx if idx < dist.size else None
