"""Regular cubical grid baseline and the minimal-resolution search.

Vertices of a uniform grid on X are labeled, a cube joins N_k when all its
corners carry label k and U otherwise, and the resolution is raised until the
Betti numbers of every region match the expected table.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .decomposition import CellGrid, RegionAssignment, classify_values, regular_arrangement
from .dynamics.ode import iterate_time1
from .dynamics.systems import HyperRectangle, SystemSpec
from .homology import ComplexTooLarge, ExpectedBetti, conley_check, region_betti
from .labeling import LabeledDataset


@dataclass
class RegularGrid:
    domain: HyperRectangle
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def cubes(self) -> int:
        return self.n ** self.dim

    def cell_grid(self) -> CellGrid:
        arr = regular_arrangement(self.domain, self.n)
        cells = np.indices((self.n,) * self.dim).reshape(self.dim, -1).T
        return CellGrid(arr, cells, arr.vertex_grid())


class NearestNeighborLabeler:
    """Majority label among the ``k`` nearest training points."""

    def __init__(self, data: LabeledDataset, k: int = 1):
        if data.labels.size == 0:
            raise ValueError("labeler has no data")
        self.data, self.k = data, k
        self.num_labels = data.num_labels
        self._tree = cKDTree(data.points)
        self.name = f"{k}-nn"

    def __call__(self, points) -> np.ndarray:
        _, idx = self._tree.query(np.atleast_2d(points), k=self.k)
        votes = self.data.labels[idx.reshape(len(idx), -1)]
        counts = np.stack([(votes == c).sum(axis=1) for c in range(self.num_labels)], axis=1)
        return counts.argmax(axis=1)


class IntegrationLabeler:
    """Ground truth: integrate each point and take the label of the nearest attractor sample."""

    def __init__(self, sys: SystemSpec, attractor_samples, horizon: int,
                 escape_factor: float = 2.0):
        if not attractor_samples or any(len(s) == 0 for s in attractor_samples):
            raise ValueError("labeler has no data")
        self.sys, self.horizon, self.escape_factor = sys, horizon, escape_factor
        self.num_labels = len(attractor_samples)
        pts = np.vstack(attractor_samples)
        self._owner = np.concatenate([np.full(len(s), k) for k, s in enumerate(attractor_samples)])
        self._tree = cKDTree(pts)
        self.name = "integration"

    def __call__(self, points) -> np.ndarray:
        ens = iterate_time1(self.sys, points, self.horizon, escape_factor=self.escape_factor)
        return self._owner[self._tree.query(ens.final)[1]]


def label_vertices(labeler, grid: RegularGrid) -> np.ndarray:
    """Label of every lattice vertex, shaped ``(n + 1,) * d``."""
    verts = grid.cell_grid().vertices
    flat = verts.reshape(-1, grid.dim)
    return np.asarray(labeler(flat), dtype=int).reshape(verts.shape[:-1])


def classify_regular(labels: np.ndarray, grid: RegularGrid, num_labels: int) -> RegionAssignment:
    """A cube goes to N_k iff all its corners carry label ``k``; otherwise to U."""
    labels = np.asarray(labels)
    if labels.shape != (grid.n + 1,) * grid.dim:
        raise ValueError("need one label per grid vertex")
    # integer labels: any eps below 1/2 turns "within eps of k" into "equal to k"
    return classify_values(grid.cell_grid(), labels.astype(float), 0.25, num_labels)


@dataclass
class BenchmarkResult:
    per_n: dict = field(default_factory=dict)  # n -> {cubes, success, betti, reason}
    min_n: int | None = None
    labeler: str = ""

    @property
    def min_cubes(self) -> int | None:
        return None if self.min_n is None else self.per_n[self.min_n]["cubes"]

    @property
    def stable_min_n(self) -> int | None:
        """Smallest scanned ``n`` from which every finer scanned resolution succeeds."""
        out = None
        for n in sorted(self.per_n, reverse=True):
            if not self.per_n[n]["success"]:
                break
            out = n
        return out

    def to_dict(self) -> dict:
        return {"labeler": self.labeler, "min_n": self.min_n, "min_cubes": self.min_cubes,
                "stable_min_n": self.stable_min_n,
                "per_n": {str(n): v for n, v in self.per_n.items()}}


def evaluate_resolution(sys: SystemSpec, labeler, expected: ExpectedBetti, n: int) -> dict:
    grid = RegularGrid(sys.domain, n)
    assignment = classify_regular(label_vertices(labeler, grid), grid, labeler.num_labels)
    try:
        result = conley_check(assignment, expected, region_betti(assignment))
    except ComplexTooLarge as exc:
        return {"cubes": grid.cubes, "success": False, "betti": None, "reason": str(exc)}
    return {"cubes": grid.cubes, "success": result.success, "betti": result.per_tag,
            "reason": result.reason}


def min_grid_search(sys: SystemSpec, labeler, expected: ExpectedBetti, n_max: int, *,
                    n_min: int = 1, full_profile: bool = False) -> BenchmarkResult:
    """Scan ``n = n_min .. n_max`` and return the smallest successful resolution.

    Success need not persist at finer resolutions, so with ``full_profile`` the
    scan continues past the first success and records every outcome.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    out = BenchmarkResult(labeler=getattr(labeler, "name", type(labeler).__name__))
    for n in range(n_min, n_max + 1):
        out.per_n[n] = evaluate_resolution(sys, labeler, expected, n)
        if out.per_n[n]["success"] and out.min_n is None:
            out.min_n = n
            if not full_profile:
                break
    return out
