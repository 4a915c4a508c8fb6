"""GF(2) homology of cubical sets and the Conley index check.

A cubical set is given by its full-dimensional cells (integer index tuples).
Faces live on the doubled ("Khalimsky") lattice: a face is an integer vector
whose odd coordinates span an edge and whose even coordinates are fixed, so its
dimension is the number of odd coordinates.

``betti`` shrinks the complex before any linear algebra:

* consecutive identical slabs are merged (the union of closed cubes changes
  only by a piecewise-linear stretch, hence keeps its topology);
* free faces are collapsed in batched rounds;

and then reduces the GF(2) boundary matrices of what is left.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decomposition import UNCERTAIN, RegionAssignment, tag_name

MAX_FACES = 10_000_000
MAX_LATTICE = 200_000_000


class ComplexTooLarge(RuntimeError):
    pass


@dataclass
class CubicalComplex:
    dim: int
    top_cells: np.ndarray  # (N, dim) int

    def __post_init__(self):
        cells = np.asarray(self.top_cells, dtype=np.int64).reshape(-1, self.dim)
        self.top_cells = np.unique(cells, axis=0) if cells.size else cells

    def __len__(self):
        return self.top_cells.shape[0]

    @property
    def empty(self) -> bool:
        return len(self) == 0

    def occupancy(self) -> np.ndarray:
        """Dense boolean array of top cells over their bounding box."""
        lo = self.top_cells.min(axis=0)
        shape = self.top_cells.max(axis=0) - lo + 1
        occ = np.zeros(shape, dtype=bool)
        occ[tuple((self.top_cells - lo).T)] = True
        return occ


def to_cubical(assignment: RegionAssignment, tag: int) -> CubicalComplex:
    """Index tuples of the cells carrying ``tag``; the geometry is discarded."""
    return CubicalComplex(assignment.grid.cells.shape[1], assignment.region(tag))


# -- complex reduction -----------------------------------------------------------

def compress_slabs(occ: np.ndarray) -> np.ndarray:
    """Merge runs of identical consecutive slabs along every axis."""
    for axis in range(occ.ndim):
        moved = np.moveaxis(occ, axis, 0)
        if moved.shape[0] > 1:
            same = np.all(moved[1:] == moved[:-1], axis=tuple(range(1, moved.ndim)))
            moved = moved[np.concatenate([[True], ~same])]
        occ = np.moveaxis(moved, 0, axis)
    return occ


def closure(occ: np.ndarray) -> np.ndarray:
    """All faces of the top cells, on the doubled lattice with a zero margin.

    Along each axis, vertex ``j`` sits at doubled coordinate ``2j + 2`` and
    top cell ``j`` at ``2j + 3``; coordinates 0, 1 and the last one stay empty.
    """
    K = occ
    for axis in range(occ.ndim):
        A = np.moveaxis(K, axis, 0)
        m = A.shape[0]
        out = np.zeros((2 * m + 4,) + A.shape[1:], dtype=bool)
        out[3:2 * m + 2:2] = A
        P = np.concatenate([np.zeros_like(A[:1]), A, np.zeros_like(A[:1])])
        out[2:2 * m + 3:2] = P[:-1] | P[1:]
        K = np.moveaxis(out, 0, axis)
    return K


def _parity_masks(shape):
    """Per axis, a broadcastable boolean mask of even doubled coordinates."""
    masks = []
    for axis, n in enumerate(shape):
        view = [1] * len(shape)
        view[axis] = n
        masks.append((np.arange(n) % 2 == 0).reshape(view))
    return masks


def _shift(K, axis, step):
    """``out[x] = K[x + step * e_axis]`` with zero fill."""
    out = np.zeros_like(K)
    src = [slice(None)] * K.ndim
    dst = [slice(None)] * K.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, None), slice(None, -step)
    else:
        src[axis], dst[axis] = slice(None, step), slice(-step, None)
    out[tuple(dst)] = K[tuple(src)]
    return out


def _coface_counts(K, even):
    cnt = np.zeros(K.shape, dtype=np.int8)
    for axis in range(K.ndim):
        both_sides = _shift(K, axis, 1).astype(np.int8) + _shift(K, axis, -1)
        cnt += both_sides * even[axis]
    return cnt


def _neighbours(idx, shape, strides, odd: bool):
    """Flat indices ``idx +- e_a`` over the axes where ``idx`` is odd (faces) or even (cofaces)."""
    out = []
    for axis, (n, s) in enumerate(zip(shape, strides)):
        sel = idx[((idx // s) % n) % 2 == (1 if odd else 0)]
        out.append(sel - s)
        out.append(sel + s)
    return np.concatenate(out)


def collapse(K: np.ndarray) -> np.ndarray:
    """Remove free face pairs until none is left; returns a reduced copy.

    A face ``f`` is free when it has exactly one coface ``t`` and ``t`` is
    maximal. Each round removes such pairs with pairwise distinct ``t``. Every
    ``f`` keeps ``t`` as its only coface while the other pairs go, so a round is
    a valid sequence of elementary collapses. Coface counts are kept up to
    date around removed faces, and only faces near a change are examined
    again.
    """
    even = _parity_masks(K.shape)
    cnt = _coface_counts(K, even).reshape(-1)
    flat = K.reshape(-1).copy()
    shape = K.shape
    strides = [int(np.prod(shape[a + 1:])) for a in range(K.ndim)]
    cand = np.flatnonzero(flat & (cnt == 1))
    while cand.size:
        cand = cand[flat[cand] & (cnt[cand] == 1)]
        if not cand.size:
            break
        # locate the single present coface of every candidate
        tau = np.full(cand.size, -1, dtype=np.int64)
        for axis, (n, s) in enumerate(zip(shape, strides)):
            ev = ((cand // s) % n) % 2 == 0
            for step in (-s, s):
                hit = ev & flat[np.where(ev, cand + step, cand)]
                tau[hit] = cand[hit] + step
        ok = (tau >= 0) & (cnt[np.maximum(tau, 0)] == 0)
        f, tau = cand[ok], tau[ok]
        tau, first = np.unique(tau, return_index=True)
        f = f[first]
        if not f.size:
            break
        flat[f] = False
        flat[tau] = False
        touched = _neighbours(np.concatenate([f, tau]), shape, strides, odd=True)
        np.subtract.at(cnt, touched, 1)
        touched = np.unique(touched)
        touched = touched[flat[touched]]
        cand = np.unique(np.concatenate(
            [touched, _neighbours(touched, shape, strides, odd=True)]))
    return flat.reshape(shape)


# -- GF(2) linear algebra ------------------------------------------------------------

def _gf2_rank(columns: list[int]) -> int:
    """Rank of a GF(2) matrix whose columns are Python ints used as bit sets."""
    pivots: dict[int, int] = {}
    rank = 0
    for col in columns:
        while col:
            low = col.bit_length() - 1
            other = pivots.get(low)
            if other is None:
                pivots[low] = col
                rank += 1
                break
            col ^= other
    return rank


def _betti_from_faces(faces: np.ndarray, dim: int) -> np.ndarray:
    """Betti numbers of a closed set of faces given as ``(n, dim)`` doubled coordinates."""
    fdim = (faces % 2).sum(axis=1)
    index = {}
    by_dim = [[] for _ in range(dim + 1)]
    for f, k in zip(map(tuple, faces.tolist()), fdim.tolist()):
        index[f] = len(by_dim[k])
        by_dim[k].append(f)
    ranks = [0] * (dim + 2)
    for k in range(1, dim + 1):
        cols = []
        for f in by_dim[k]:
            bits = 0
            for axis in range(dim):
                if f[axis] % 2:
                    for step in (-1, 1):
                        g = list(f)
                        g[axis] += step
                        bits |= 1 << index[tuple(g)]
            cols.append(bits)
        ranks[k] = _gf2_rank(cols)
    counts = [len(b) for b in by_dim]
    # a subset of R^d has no d-dimensional homology, so the vector stops at b_{d-1}
    return np.array([counts[k] - ranks[k] - ranks[k + 1] for k in range(dim)], dtype=int)


def betti(cx: CubicalComplex, *, reduce: bool = True) -> np.ndarray:
    """Betti numbers ``(b_0, ..., b_{d-1})`` over GF(2) of the union of the top cells.

    ``reduce=False`` skips slab merging and collapses and reduces the boundary
    matrices of the full closure.
    """
    if cx.empty:
        raise ValueError("homology of an empty complex is not defined here")
    occ = cx.occupancy()
    if reduce:
        occ = compress_slabs(occ)
    if int(np.prod(2 * np.array(occ.shape) + 4)) > MAX_LATTICE:
        raise ComplexTooLarge(f"doubled lattice of shape {occ.shape} is too large")
    K = closure(occ)
    n_faces = int(K.sum())
    if n_faces > MAX_FACES:
        raise ComplexTooLarge(f"{n_faces} faces exceed the limit of {MAX_FACES}")
    if reduce:
        K = collapse(K)
    return _betti_from_faces(np.argwhere(K), cx.dim)


def component_count(cx: CubicalComplex) -> int:
    """Connected components of the union of closed cubes (cubes touching at any face)."""
    from scipy import ndimage

    occ = cx.occupancy()
    _, n = ndimage.label(occ, structure=np.ones((3,) * cx.dim, dtype=bool))
    return int(n)


# -- Conley index check and Morse representation -----------------------------------

@dataclass
class ExpectedBetti:
    uncertain: tuple
    attractors: list  # one Betti tuple per label
    anchors: list | None = None  # optional reference point per label, for alignment

    def for_tag(self, tag: int) -> tuple:
        return self.uncertain if tag == UNCERTAIN else self.attractors[tag]

    def to_dict(self) -> dict:
        out = {"U": list(self.uncertain),
               "attractors": [{"betti": list(b)} for b in self.attractors]}
        if self.anchors is not None:
            for a, p in zip(out["attractors"], self.anchors):
                a["anchor"] = list(map(float, p))
        return out

    @classmethod
    def from_dict(cls, raw: dict, transform=None) -> "ExpectedBetti":
        atts = raw["attractors"]
        anchors = None
        if all("anchor" in a for a in atts):
            anchors = [np.asarray(a["anchor"], float) for a in atts]
        elif all("anchor_y" in a for a in atts):
            T = np.eye(len(atts[0]["anchor_y"])) if transform is None else transform
            anchors = [T @ np.asarray(a["anchor_y"], float) for a in atts]
        return cls(tuple(raw["U"]), [tuple(a["betti"]) for a in atts], anchors)


def expected_table(system_name: str, transform=None) -> ExpectedBetti:
    import json
    from importlib import resources

    table = json.loads(resources.files("mlcd.data").joinpath("expected_betti.json").read_text())
    if system_name not in table:
        raise KeyError(f"no expected Betti numbers for {system_name!r}")
    return ExpectedBetti.from_dict(table[system_name], transform)


@dataclass
class ConleyResult:
    success: bool
    per_tag: dict = field(default_factory=dict)  # tag name -> Betti list or None
    reason: str | None = None

    def to_dict(self) -> dict:
        return {"success": self.success, "per_tag_betti": self.per_tag, "reason": self.reason}


def region_betti(assignment: RegionAssignment) -> dict:
    """Betti vector per tag (``None`` for an empty region)."""
    out = {}
    for tag in list(range(assignment.num_labels)) + [UNCERTAIN]:
        cx = to_cubical(assignment, tag)
        out[tag] = None if cx.empty else tuple(int(b) for b in betti(cx))
    return out


def conley_check(assignment: RegionAssignment, expected: ExpectedBetti,
                 betti_results: dict | None = None) -> ConleyResult:
    """Every N_k and U must be nonempty with exactly the expected Betti numbers.

    Attractors are matched label by label when the table carries anchors and
    as a multiset otherwise.
    """
    if len(expected.attractors) != assignment.num_labels:
        raise ValueError("expected table does not cover every label")
    results = region_betti(assignment) if betti_results is None else betti_results
    per_tag = {tag_name(t): (None if b is None else list(b)) for t, b in results.items()}
    for tag in list(range(assignment.num_labels)) + [UNCERTAIN]:
        if results[tag] is None:
            return ConleyResult(False, per_tag, f"{tag_name(tag)} is empty")
    if expected.anchors is None:
        # without anchors the labels carry no identity; compare as multisets
        got = sorted(tuple(results[k]) for k in range(assignment.num_labels))
        if got != sorted(tuple(b) for b in expected.attractors):
            return ConleyResult(False, per_tag, f"attractor betti {got} do not match")
        tags = [UNCERTAIN]
    else:
        tags = list(range(assignment.num_labels)) + [UNCERTAIN]
    for tag in tags:
        got, want = tuple(results[tag]), tuple(expected.for_tag(tag))
        if got != want:
            return ConleyResult(False, per_tag, f"{tag_name(tag)}: betti {list(got)} != {list(want)}")
    return ConleyResult(True, per_tag)


@dataclass
class MorseReport:
    minimal: dict  # "M0".. -> Betti of N_k
    top: list | None  # Betti of U, descriptive only
    order: list  # pairs (lower, upper)
    lattice_size: int

    def to_dict(self) -> dict:
        return {"minimal": self.minimal, "top": self.top,
                "order": [list(p) for p in self.order], "lattice_size": self.lattice_size}


def lattice_size(num_attractors: int) -> int:
    """All unions of the minimal attractors (including the empty one) plus omega(X)."""
    return 2 ** num_attractors + 1


def morse_report(assignment: RegionAssignment, betti_results: dict | None = None) -> MorseReport:
    if betti_results is None:
        betti_results = region_betti(assignment)
    L = assignment.num_labels
    minimal = {f"M{k}": (None if betti_results[k] is None else list(betti_results[k]))
               for k in range(L)}
    top = betti_results.get(UNCERTAIN)
    return MorseReport(minimal, None if top is None else list(top),
                       [(f"M{k}", "M") for k in range(L)], lattice_size(L))
