"""Geometric graphs, proximity edge builders and voxel coarsening.

Edges are directed (source, target) pairs with target-side aggregation.
All builders are brute force O(N^2); node counts stay in the thousands.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GeometricGraph:
    """Node features (N x f, f may be 0), positions (N x d) and edge list."""

    features: np.ndarray
    positions: np.ndarray
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.intp))

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2:
            raise ValueError("positions must be N x d")
        n = self.positions.shape[0]
        if self.features is None:
            self.features = np.zeros((n, 0))
        self.features = np.asarray(self.features, dtype=np.float64).reshape(n, -1)
        self.edges = np.asarray(self.edges, dtype=np.intp).reshape(-1, 2)
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")

    @property
    def n_nodes(self):
        return self.positions.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def dim(self):
        return self.positions.shape[1]

    def copy(self):
        return GeometricGraph(self.features.copy(), self.positions.copy(), self.edges.copy())


@dataclass
class CoarseAssignment:
    """Node -> cluster map plus cluster means; s' realized clusters."""

    cluster_of: np.ndarray
    coarse_positions: np.ndarray
    coarse_features: np.ndarray

    @property
    def n_clusters(self):
        return self.coarse_positions.shape[0]


def _pairwise_sq_dists(positions):
    diff = positions[:, None, :] - positions[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def build_knn_edges(positions, k):
    """Directed edges from each node's min(k, N-1) nearest neighbors to it.

    Ties broken by lower source index (argsort is stable on the index axis).
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    k = min(k, n - 1)
    if n < 1:
        raise ValueError("need at least one node")
    if k <= 0:
        return np.zeros((0, 2), dtype=np.intp)
    d2 = _pairwise_sq_dists(positions)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    targets = np.repeat(np.arange(n), k)
    return np.stack([order.ravel(), targets], axis=1).astype(np.intp)


def build_radius_edges(positions, radius):
    """Directed edges between all ordered pairs within ``radius``, no self loops."""
    positions = np.asarray(positions, dtype=np.float64)
    d2 = _pairwise_sq_dists(positions)
    np.fill_diagonal(d2, np.inf)
    src, tgt = np.nonzero(d2 <= radius * radius)
    return np.stack([src, tgt], axis=1).astype(np.intp)


def build_fully_connected_edges(n):
    src, tgt = np.nonzero(~np.eye(n, dtype=bool))
    return np.stack([src, tgt], axis=1).astype(np.intp)


def build_long_short_edges(positions, k, seed):
    """Each node draws min(k, N-1) distinct incoming edges uniformly at random."""
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if n < 2:
        raise ValueError("need at least two nodes")
    k = min(k, n - 1)
    rng = np.random.default_rng(seed)
    edges = []
    for tgt in range(n):
        others = np.delete(np.arange(n), tgt)
        src = rng.choice(others, size=k, replace=False)
        edges.append(np.stack([src, np.full(k, tgt)], axis=1))
    return np.concatenate(edges, axis=0).astype(np.intp)


def voxel_coarsen(graph: GeometricGraph, s: int) -> CoarseAssignment:
    """Axis-aligned voxel clustering into at most ``s`` clusters.

    Each dimension's [min, max] range is split into ceil(s^(1/d)) equal
    half-open bins (last bin closed); empty voxels are dropped, so the
    realized cluster count can be below ``s``. Cluster position/feature are
    the member means.
    """
    if s < 1:
        raise ValueError("s must be positive")
    pos = graph.positions
    n, d = pos.shape
    p = int(np.ceil(s ** (1.0 / d) - 1e-9))
    p = max(p, 1)
    bins = np.zeros((n, d), dtype=np.intp)
    for j in range(d):
        lo, hi = pos[:, j].min(), pos[:, j].max()
        if hi <= lo:
            continue  # degenerate dimension: one bin
        idx = np.floor((pos[:, j] - lo) / (hi - lo) * p).astype(np.intp)
        bins[:, j] = np.clip(idx, 0, p - 1)  # closes the last bin
    flat = np.ravel_multi_index(bins.T, (p,) * d)
    uniq, cluster_of = np.unique(flat, return_inverse=True)
    sprime = uniq.size
    counts = np.bincount(cluster_of, minlength=sprime).astype(np.float64)
    coarse_pos = np.zeros((sprime, d))
    np.add.at(coarse_pos, cluster_of, pos)
    coarse_pos /= counts[:, None]
    f = graph.features.shape[1]
    coarse_feat = np.zeros((sprime, f))
    if f:
        np.add.at(coarse_feat, cluster_of, graph.features)
        coarse_feat /= counts[:, None]
    return CoarseAssignment(cluster_of, coarse_pos, coarse_feat)


def identity_assignment(graph: GeometricGraph) -> CoarseAssignment:
    """One-to-one clusters: every node is its own coarse node."""
    n = graph.n_nodes
    return CoarseAssignment(
        np.arange(n, dtype=np.intp), graph.positions.copy(), graph.features.copy()
    )


# ----------------------------------------------------------------------
# text format: header "N d f", then N lines of d positions + f features,
# then an optional "E" line followed by "source target" pairs.


def save_graph(path, graph: GeometricGraph):
    with open(path, "w") as fh:
        n, d, f = graph.n_nodes, graph.dim, graph.n_features
        fh.write(f"{n} {d} {f}\n")
        for i in range(n):
            vals = list(graph.positions[i]) + list(graph.features[i])
            fh.write(" ".join(repr(float(v)) for v in vals) + "\n")
        if graph.edges.size:
            fh.write("E\n")
            for s, t in graph.edges:
                fh.write(f"{s} {t}\n")


def load_graph(path) -> GeometricGraph:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split()
    if len(header) != 3:
        raise ValueError(f"line 1: expected header 'N d f', got {lines[0]!r}")
    n, d, f = (int(x) for x in header)
    pos = np.zeros((n, d))
    feat = np.zeros((n, f))
    for i in range(n):
        vals = [float(x) for x in lines[1 + i].split()]
        if len(vals) != d + f:
            raise ValueError(f"line {i + 2}: expected {d + f} values, got {len(vals)}")
        pos[i] = vals[:d]
        feat[i] = vals[d:]
    edges = []
    idx = 1 + n
    if idx < len(lines) and lines[idx] == "E":
        for j, ln in enumerate(lines[idx + 1:]):
            parts = ln.split()
            if len(parts) != 2:
                raise ValueError(f"line {idx + j + 2}: expected 'source target'")
            edges.append((int(parts[0]), int(parts[1])))
    return GeometricGraph(feat, pos, np.asarray(edges, dtype=np.intp).reshape(-1, 2))
