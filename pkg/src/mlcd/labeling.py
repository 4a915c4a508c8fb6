"""Attractor identification by 0-dimensional persistence (single linkage).

The 0-dimensional persistence diagram of a Vietoris-Rips filtration has one
finite death per edge of a Euclidean minimum spanning tree, so everything here
reduces to computing an MST and cutting its longest edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dynamics.ode import OrbitEnsemble

MAX_CLUSTER_POINTS = 2000


@dataclass
class PersistenceDiagram0:
    deaths: np.ndarray  # descending
    edges: np.ndarray = field(repr=False)  # (n-1, 2) MST edges, same order as deaths

    def to_csv(self, path):
        np.savetxt(path, self.deaths, header="death", comments="", fmt="%.17g")


@dataclass
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    num_labels: int
    attractor_samples: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int)
        if self.labels.shape != (self.points.shape[0],):
            raise ValueError("one label per point required")
        missing = set(range(self.num_labels)) - set(np.unique(self.labels).tolist())
        if missing:
            raise ValueError(f"labels {sorted(missing)} are not witnessed by any point")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_labels):
            raise ValueError("labels out of range")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_labels)

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.points[idx], self.labels[idx], self.num_labels,
                              self.attractor_samples)

    def relabel(self, perm) -> "LabeledDataset":
        """Rename label ``k`` to ``perm[k]``."""
        perm = np.asarray(perm, dtype=int)
        samples = [None] * self.num_labels
        for k, s in enumerate(self.attractor_samples):
            samples[perm[k]] = s
        return LabeledDataset(self.points, perm[self.labels], self.num_labels,
                              samples if self.attractor_samples else [])

    def to_csv(self, path):
        d = self.dim
        header = ",".join([f"x{i + 1}" for i in range(d)] + ["label"])
        table = np.column_stack([self.points, self.labels])
        np.savetxt(path, table, delimiter=",", header=header, comments="",
                   fmt=["%.17g"] * d + ["%d"])

    @classmethod
    def from_csv(cls, path) -> "LabeledDataset":
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        labels = table[:, -1].astype(int)
        return cls(table[:, :-1], labels, int(labels.max()) + 1)


def mst_prim(points) -> tuple[np.ndarray, np.ndarray]:
    """Dense Prim's algorithm; returns ``(edges, weights)`` in insertion order."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = np.linalg.norm(pts - pts[0], axis=1)
    parent = np.zeros(n, dtype=int)
    best[0] = np.inf
    edges = np.empty((n - 1, 2), dtype=int)
    weights = np.empty(n - 1)
    for k in range(n - 1):
        j = int(np.argmin(best))
        edges[k] = parent[j], j
        weights[k] = best[j]
        in_tree[j] = True
        best[j] = np.inf
        dj = np.linalg.norm(pts - pts[j], axis=1)
        closer = (~in_tree) & (dj < best)
        best[closer] = dj[closer]
        parent[closer] = j
    return edges, weights


def persistence0(points) -> PersistenceDiagram0:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 2:
        raise ValueError("persistence needs at least two points")
    edges, weights = mst_prim(pts)
    order = np.argsort(-weights, kind="stable")
    return PersistenceDiagram0(weights[order], edges[order])


def choose_num_clusters(diag: PersistenceDiagram0 | np.ndarray, max_clusters: int = 10,
                        gap_ratio_min: float = 3.0) -> int:
    """Cluster count from the largest multiplicative gap between consecutive deaths."""
    deaths = diag.deaths if isinstance(diag, PersistenceDiagram0) else np.asarray(diag, float)
    deaths = np.maximum(np.sort(deaths)[::-1], 1e-12)
    upper = min(max_clusters, deaths.size)
    if upper < 2:
        return 1
    ratios = deaths[: upper - 1] / deaths[1:upper]
    m = int(np.argmax(ratios)) + 1
    return m + 1 if ratios[m - 1] >= gap_ratio_min else 1


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def _components(n, edges) -> np.ndarray:
    uf = _UnionFind(n)
    for a, b in edges:
        uf.union(int(a), int(b))
    roots = np.array([uf.find(i) for i in range(n)])
    return np.unique(roots, return_inverse=True)[1]


def _order_by_centroid(points, comp, L):
    cents = np.array([points[comp == c].mean(axis=0) for c in range(L)])
    order = np.lexsort(cents.T[::-1])
    rank = np.empty(L, dtype=int)
    rank[order] = np.arange(L)
    return rank[comp]


def cluster_labels(points, L: int, diag: PersistenceDiagram0 | None = None):
    """Single-linkage cut into exactly ``L`` clusters.

    Labels are ordered by the lexicographic order of cluster centroids.
    Returns ``(labels, samples)`` where ``samples[k]`` holds the points of cluster k.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if L < 1:
        raise ValueError("L must be >= 1")
    if L > np.unique(pts, axis=0).shape[0]:
        raise ValueError("more clusters requested than distinct points")
    if L == 1:
        labels = np.zeros(n, dtype=int)
        return labels, [pts]
    if diag is None:
        diag = persistence0(pts)
    comp = _components(n, diag.edges[L - 1:])
    labels = _order_by_centroid(pts, comp, L)
    return labels, [pts[labels == k] for k in range(L)]


def cluster_at_scale(points, delta: float) -> np.ndarray:
    """Components of the single-linkage graph at threshold ``delta``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    edges, weights = mst_prim(pts)
    return _components(pts.shape[0], edges[weights <= delta])


def label_orbits(ens: OrbitEnsemble, num_labels: int | None = None, *, seed: int = 0,
                 max_points: int = MAX_CLUSTER_POINTS, max_clusters: int = 10):
    """Build the labeled dataset from the final iterates of an orbit ensemble.

    Clustering runs on a seeded subsample of at most ``max_points`` terminal
    points; the remaining points take the label of their nearest subsample point.
    Escaped orbits are dropped. Returns ``(dataset, diagram)``.
    """
    keep = np.flatnonzero(~ens.escaped)
    final = ens.final[keep]
    rng = np.random.default_rng(seed)
    if final.shape[0] > max_points:
        sub = np.sort(rng.choice(final.shape[0], max_points, replace=False))
    else:
        sub = np.arange(final.shape[0])
    diag = persistence0(final[sub])
    L = num_labels if num_labels is not None else choose_num_clusters(diag, max_clusters)
    sub_labels, _ = cluster_labels(final[sub], L, diag)
    nearest = cKDTree(final[sub]).query(final)[1]
    labels = sub_labels[nearest]
    samples = [final[sub][sub_labels == k] for k in range(L)]
    return LabeledDataset(ens.initial[keep], labels, L, samples), diag


def balance(ds: LabeledDataset, strategy="oversample", *, seed: int = 0) -> LabeledDataset:
    """Oversample classes until counts are equal, or until they follow given ratios.

    ``strategy`` is ``"oversample"`` or a sequence of per-class ratios such as
    ``(70, 30)``. Points are only ever duplicated, never dropped.
    """
    counts = ds.counts()
    if np.any(counts == 0):
        raise ValueError("cannot balance a dataset with an empty class")
    if isinstance(strategy, str):
        if strategy != "oversample":
            raise ValueError(f"unknown balancing strategy {strategy!r}")
        ratios = np.ones(ds.num_labels)
    else:
        ratios = np.asarray(strategy, dtype=float)
        if ratios.shape != (ds.num_labels,) or np.any(ratios <= 0):
            raise ValueError("need one positive ratio per class")
    scale = np.max(counts / ratios)
    targets = np.maximum(np.round(scale * ratios).astype(int), counts)
    rng = np.random.default_rng(seed)
    idx = [np.arange(ds.labels.size)]
    for k in range(ds.num_labels):
        extra = targets[k] - counts[k]
        if extra > 0:
            idx.append(rng.choice(np.flatnonzero(ds.labels == k), extra, replace=True))
    return ds.subset(np.concatenate(idx))


def align_to_anchors(samples, anchors) -> np.ndarray:
    """Permutation ``perm`` sending cluster ``k`` to the anchor nearest its samples.

    Solves the assignment problem on the distance from each anchor to the
    closest point of each cluster, so every anchor receives exactly one cluster.
    """
    from scipy.optimize import linear_sum_assignment

    if len(samples) != len(anchors):
        raise ValueError("need one anchor per cluster")
    cost = np.array([[np.linalg.norm(np.atleast_2d(s) - a, axis=1).min() for a in anchors]
                     for s in samples])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(samples), dtype=int)
    perm[rows] = cols
    return perm
