"""Parallelotope grid induced by a trained constrained network.

Every group of identical hidden rows contributes ``2q`` parallel kink
hyperplanes. Measured along the unit normal ``u`` of the group, the grid is a
1-D partition of the projection of the domain; the d partitions together form
a (skewed) tensor-product grid whose cells are parallelotopes.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .dynamics.systems import HyperRectangle
from .network import ConstrainedNet, check_span, forward

UNCERTAIN = -1
DEDUP_RTOL = 1e-9


@dataclass
class Arrangement:
    directions: np.ndarray  # (d, d) unit rows
    cuts: list  # per direction, strictly increasing cut values of t = <u, x>
    bound_flags: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.directions.shape[0]

    @property
    def shape(self) -> tuple:
        return tuple(len(c) - 1 for c in self.cuts)

    def vertex_grid(self) -> np.ndarray:
        """Coordinates of every grid vertex, shape ``shape + 1`` by ``d``."""
        mesh = np.meshgrid(*self.cuts, indexing="ij")
        T = np.stack(mesh, axis=-1)
        flat = np.linalg.solve(self.directions, T.reshape(-1, self.dim).T).T
        return flat.reshape(T.shape)

    def to_dict(self) -> dict:
        return {"directions": self.directions.tolist(), "cuts": [c.tolist() for c in self.cuts]}


def _projection_interval(u, domain: HyperRectangle):
    lo = np.minimum(u * domain.lower, u * domain.upper).sum()
    hi = np.maximum(u * domain.lower, u * domain.upper).sum()
    return lo, hi


def _dedup(values, tol):
    out = []
    for v in np.sort(values):
        if not out or v - out[-1] > tol:
            out.append(v)
    return np.array(out)


def extract_arrangement(net: ConstrainedNet, domain: HyperRectangle) -> Arrangement:
    """Kink levels of every group, clipped to the domain and closed by two bounding cuts."""
    if not check_span(net):
        raise ValueError("network directions do not span the space")
    norms = np.linalg.norm(net.directions, axis=1)
    units = net.directions / norms[:, None]
    cuts, flags = [], []
    for i in range(net.d):
        t_min, t_max = _projection_interval(units[i], domain)
        tol = DEDUP_RTOL * max(t_max - t_min, 1.0)
        b = net.offsets[i]
        levels = np.concatenate([(0.0 - b) / norms[i], (1.0 - b) / norms[i]])
        inside = _dedup(levels[(levels > t_min + tol) & (levels < t_max - tol)], tol)
        cuts.append(np.concatenate([[t_min], inside, [t_max]]))
        flags.append([True] + [False] * inside.size + [True])
    return Arrangement(units, cuts, flags)


def regular_arrangement(domain: HyperRectangle, n: int) -> Arrangement:
    """Uniform subdivision of the box into ``n`` slabs per axis."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cuts = [np.linspace(lo, hi, n + 1) for lo, hi in zip(domain.lower, domain.upper)]
    return Arrangement(np.eye(domain.dim), cuts, [[True] * (n + 1) for _ in cuts])


@dataclass
class CellGrid:
    arrangement: Arrangement
    cells: np.ndarray  # (N, d) interval indices
    vertices: np.ndarray = field(repr=False)  # vertex grid, see Arrangement.vertex_grid

    def __len__(self):
        return self.cells.shape[0]

    def cell_corners(self, i: int) -> np.ndarray:
        """The ``2^d`` corners of cell ``i`` in original coordinates."""
        d = self.cells.shape[1]
        offs = np.array(list(itertools.product((0, 1), repeat=d)))
        idx = self.cells[i] + offs
        return self.vertices[tuple(idx.T)]


def _intersects(units, lo_t, hi_t, domain: HyperRectangle, tol=1e-9) -> bool:
    d = units.shape[0]
    A = np.vstack([units, -units])
    b = np.concatenate([hi_t + tol, -(lo_t - tol)])
    res = linprog(np.zeros(d), A_ub=A, b_ub=b,
                  bounds=list(zip(domain.lower - tol, domain.upper + tol)), method="highs")
    if res.status == 2:
        return False
    # solver trouble other than infeasibility keeps the cell
    return True


def enumerate_cells(arr: Arrangement, domain: HyperRectangle) -> CellGrid:
    """Cells of the tensor-product grid whose closed parallelotope meets the domain."""
    verts = arr.vertex_grid()
    shape = arr.shape
    d = arr.dim
    axis_aligned = np.allclose(np.abs(arr.directions), np.eye(d))
    offs = np.array(list(itertools.product((0, 1), repeat=d)))
    kept = []
    for idx in itertools.product(*(range(s) for s in shape)):
        idx = np.array(idx)
        if axis_aligned:
            kept.append(idx)
            continue
        corners = verts[tuple((idx + offs).T)]
        lo, hi = corners.min(axis=0), corners.max(axis=0)
        if np.any(lo > domain.upper + 1e-9) or np.any(hi < domain.lower - 1e-9):
            continue
        if domain.contains(corners, tol=1e-9).any():
            kept.append(idx)
            continue
        lo_t = np.array([arr.cuts[i][idx[i]] for i in range(d)])
        hi_t = np.array([arr.cuts[i][idx[i] + 1] for i in range(d)])
        if _intersects(arr.directions, lo_t, hi_t, domain):
            kept.append(idx)
    cells = np.array(kept, dtype=int).reshape(-1, d)
    return CellGrid(arr, cells, verts)


@dataclass
class RegionAssignment:
    grid: CellGrid
    tags: np.ndarray  # label k, or UNCERTAIN
    epsilon: float
    num_labels: int

    @property
    def cells(self) -> np.ndarray:
        return self.grid.cells

    def region(self, tag: int) -> np.ndarray:
        """Index tuples of the cells carrying ``tag``."""
        return self.grid.cells[self.tags == tag]

    def counts(self) -> dict:
        out = {k: int(np.sum(self.tags == k)) for k in range(self.num_labels)}
        out[UNCERTAIN] = int(np.sum(self.tags == UNCERTAIN))
        return out

    def to_dict(self) -> dict:
        arr = self.grid.arrangement
        return {**arr.to_dict(), "epsilon": self.epsilon, "num_labels": self.num_labels,
                "cells": [{"index": c.tolist(), "tag": tag_name(int(t))}
                          for c, t in zip(self.grid.cells, self.tags)]}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, raw: dict) -> "RegionAssignment":
        arr = Arrangement(np.asarray(raw["directions"], float),
                          [np.asarray(c, float) for c in raw["cuts"]])
        cells = np.array([c["index"] for c in raw["cells"]], dtype=int).reshape(-1, arr.dim)
        tags = np.array([parse_tag(c["tag"]) for c in raw["cells"]], dtype=int)
        grid = CellGrid(arr, cells, arr.vertex_grid())
        L = raw.get("num_labels", int(tags.max()) + 1 if tags.size else 0)
        return cls(grid, tags, float(raw["epsilon"]), int(L))

    @classmethod
    def load(cls, path) -> "RegionAssignment":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def plot_rows(self):
        """Rows ``(cell, tag, corner, x, y)`` tracing each 2-D cell as a polygon."""
        if self.grid.arrangement.dim != 2:
            raise ValueError("polygon export is only defined for planar grids")
        order = [0, 2, 3, 1]  # (0,0) (1,0) (1,1) (0,1)
        rows = []
        for i, t in enumerate(self.tags):
            corners = self.grid.cell_corners(i)[order]
            for j, (x, y) in enumerate(corners):
                rows.append((i, tag_name(int(t)), j, float(x), float(y)))
        return rows

    def to_plot_csv(self, path):
        with open(path, "w") as fh:
            fh.write("cell,tag,corner,x,y\n")
            for r in self.plot_rows():
                fh.write(f"{r[0]},{r[1]},{r[2]},{r[3]:.17g},{r[4]:.17g}\n")


def tag_name(tag: int) -> str:
    return "U" if tag == UNCERTAIN else f"N{tag}"


def parse_tag(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name)
    return UNCERTAIN if name == "U" else int(str(name).lstrip("N"))


def corner_values(grid: CellGrid, vertex_values: np.ndarray) -> np.ndarray:
    """``(N, 2^d)`` values at the corners of every cell, read from the vertex grid."""
    d = grid.cells.shape[1]
    offs = np.array(list(itertools.product((0, 1), repeat=d)))
    idx = grid.cells[:, None, :] + offs[None]
    return vertex_values[tuple(np.moveaxis(idx, -1, 0))]


def classify_values(grid: CellGrid, vertex_values: np.ndarray, eps: float,
                    num_labels: int) -> RegionAssignment:
    vals = corner_values(grid, vertex_values)
    tags = np.full(len(grid), UNCERTAIN, dtype=int)
    for k in range(num_labels):
        tags[np.all(np.abs(vals - k) <= eps, axis=1)] = k
    return RegionAssignment(grid, tags, float(eps), num_labels)


def vertex_outputs(net: ConstrainedNet, grid: CellGrid) -> np.ndarray:
    """Network output at each grid vertex, evaluated once and shared by all cells."""
    shape = grid.vertices.shape[:-1]
    return forward(net, grid.vertices.reshape(-1, grid.vertices.shape[-1])).reshape(shape)


def classify_cells(net: ConstrainedNet, grid: CellGrid, eps: float,
                   vertex_values: np.ndarray | None = None) -> RegionAssignment:
    """Tag a cell ``k`` when the output is within ``eps`` of ``k`` at all its corners."""
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    if vertex_values is None:
        vertex_values = vertex_outputs(net, grid)
    return classify_values(grid, vertex_values, eps, net.num_labels)


def decompose(net: ConstrainedNet, domain: HyperRectangle, eps: float) -> RegionAssignment:
    grid = enumerate_cells(extract_arrangement(net, domain), domain)
    return classify_cells(net, grid, eps)
