"""Dynamic message passing network and its fixed-structure baselines.

One forward pass: look up (r_t, s_t) from the schedule, lift node inputs,
then for each layer coarsen the graph to s_t voxel clusters, message pass
over a kNN graph with k = r_t on the coarse nodes, and gate the result back
onto the original nodes; a final projection produces the per-node output.

Baselines reuse the identical layer stack with one-to-one clusters and a
fixed edge builder, so DMP with singleton clusters reproduces them exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .graphs import (
    CoarseAssignment,
    GeometricGraph,
    build_fully_connected_edges,
    build_knn_edges,
    build_long_short_edges,
    identity_assignment,
    voxel_coarsen,
)
from .schedule import ScheduleSpec, eval_schedule
from .tensor import Tensor, concat, segment_softmax, segment_sum

BASELINE_KINDS = ("knn_fixed", "fully_connected", "long_short", "random_pred")


def node_input(graph: GeometricGraph, t: float) -> np.ndarray:
    """Rows of [features || positions || t]; d_in = f + d + 1."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    n = graph.n_nodes
    tcol = np.full((n, 1), float(t))
    return np.concatenate([graph.features, graph.positions, tcol], axis=1)


@dataclass
class Structure:
    """Precomputed coarse structure for one forward pass (possibly a merged
    batch of disjoint graphs with offset cluster ids)."""

    cluster_of: np.ndarray        # node -> coarse node
    coarse_positions: np.ndarray  # s' x d
    coarse_inputs: np.ndarray     # s' x d_in, member means of node inputs
    edges: np.ndarray             # coarse (source, target) pairs


def _segment_mean_np(values, seg, nseg):
    out = np.zeros((nseg, values.shape[1]))
    np.add.at(out, seg, values)
    counts = np.bincount(seg, minlength=nseg).astype(np.float64)
    return out / np.maximum(counts, 1.0)[:, None]


def build_structure(graph: GeometricGraph, inputs: np.ndarray, s_t: int, r_t: int,
                    assignment: CoarseAssignment | None = None,
                    edges: np.ndarray | None = None) -> Structure:
    if assignment is None:
        assignment = voxel_coarsen(graph, s_t)
    nclusters = assignment.n_clusters
    if edges is None:
        edges = build_knn_edges(assignment.coarse_positions, r_t)
    coarse_inputs = _segment_mean_np(inputs, assignment.cluster_of, nclusters)
    return Structure(assignment.cluster_of, assignment.coarse_positions, coarse_inputs, edges)


class GcnConv(nn.Module):
    """Mean aggregation over in-neighbors followed by a shared linear map."""

    def __init__(self, hdim, rng):
        self.lin = nn.Linear(hdim, hdim, rng)

    def __call__(self, h: Tensor, edges: np.ndarray) -> Tensor:
        nseg = h.data.shape[0]
        if edges.size == 0:
            agg = Tensor(np.zeros_like(h.data), _parents=(), _backward=None)
            return self.lin(agg)
        src, tgt = edges[:, 0], edges[:, 1]
        summed = segment_sum(h.gather_rows(src), tgt, nseg)
        deg = np.bincount(tgt, minlength=nseg).astype(np.float64)
        inv = 1.0 / np.maximum(deg, 1.0)
        return self.lin(summed * inv[:, None])


class GatConv(nn.Module):
    """Attention over each target's {self} + in-neighbors."""

    def __init__(self, hdim, rng):
        self.lin_s = nn.Linear(hdim, hdim, rng)
        self.lin_t = nn.Linear(hdim, hdim, rng)
        self.att_s = Tensor(rng.normal(0.0, 1.0 / np.sqrt(hdim), size=(hdim, 1)),
                            requires_grad=True)
        self.att_t = Tensor(rng.normal(0.0, 1.0 / np.sqrt(hdim), size=(hdim, 1)),
                            requires_grad=True)

    def _logits_and_values(self, h: Tensor, edges: np.ndarray):
        n = h.data.shape[0]
        vals_s = self.lin_s(h)
        vals_t = self.lin_t(h)
        score_s = (vals_s @ self.att_s).reshape(n)
        score_t = (vals_t @ self.att_t).reshape(n)
        if edges.size:
            src, tgt = edges[:, 0], edges[:, 1]
        else:
            src = tgt = np.zeros(0, dtype=np.intp)
        self_ids = np.arange(n, dtype=np.intp)
        seg = np.concatenate([tgt, self_ids])
        logits = concat([score_s.gather_rows(tgt) + score_t.gather_rows(src),
                         score_s + score_t], axis=0).leaky_relu()
        values = concat([vals_t.gather_rows(src), vals_s], axis=0)
        return logits, values, seg

    def __call__(self, h: Tensor, edges: np.ndarray) -> Tensor:
        n = h.data.shape[0]
        logits, values, seg = self._logits_and_values(h, edges)
        alpha = segment_softmax(logits, seg)
        return segment_sum(values * alpha.reshape(-1, 1), seg, n)

    def attention(self, h: Tensor, edges: np.ndarray) -> np.ndarray:
        """Edge attention weights (same order as ``edges``), no grad."""
        logits, _, seg = self._logits_and_values(h, edges)
        alpha = segment_softmax(logits, seg)
        return alpha.data[: edges.shape[0]].copy()


class _PointMessage(nn.Module):
    """Shared form of the coarsen/uncoarsen message: three linear encodings
    (vector pair, position offset, distance) fed to an MLP."""

    def __init__(self, hdim, d, rng, norm):
        self.lin_pair = nn.Linear(2 * hdim, hdim, rng)
        self.lin_rel = nn.Linear(d, hdim, rng)
        self.lin_dist = nn.Linear(1, hdim, rng)
        self.mlp = nn.MLP([3 * hdim, hdim, hdim], rng, norm=norm)

    def __call__(self, h_a: Tensor, h_b: Tensor, rel: np.ndarray, dist: np.ndarray) -> Tensor:
        pair = self.lin_pair(concat([h_a, h_b], axis=1))
        enc = concat([pair, self.lin_rel(Tensor(rel)), self.lin_dist(Tensor(dist))], axis=1)
        return self.mlp(enc)


class DmpLayer(nn.Module):
    def __init__(self, hdim, d, mp_kind, rng, norm):
        self.coarsen_msg = _PointMessage(hdim, d, rng, norm)
        if mp_kind == "gcn":
            self.mp = GcnConv(hdim, rng)
        elif mp_kind == "gat":
            self.mp = GatConv(hdim, rng)
        else:
            raise ValueError(f"unknown mp_kind {mp_kind!r}")
        self.uncoarsen_msg = _PointMessage(hdim, d, rng, norm)
        self.gate = nn.Linear(2 * hdim, hdim, rng)
        self.combine = nn.MLP([hdim, hdim, hdim], rng, norm=norm)

    def coarsen(self, h: Tensor, h_coarse: Tensor, rel, dist, cluster_of, nclusters) -> Tensor:
        msg = self.coarsen_msg(h_coarse.gather_rows(cluster_of), h, rel, dist)
        return segment_sum(msg, cluster_of, nclusters)

    def uncoarsen(self, h: Tensor, h_coarse: Tensor, rel, dist, cluster_of) -> Tensor:
        spread = self.uncoarsen_msg(h, h_coarse.gather_rows(cluster_of), -rel, dist)
        lam = self.gate(concat([h, spread], axis=1)).sigmoid()
        return self.combine(lam * h + (1.0 - lam) * spread)


class DmpModel(nn.Module):
    """K-layer dynamic message passing network.

    ``d_in`` = f + d + 1 node input width, ``d`` the position dimension,
    ``odim`` the predicted component's width.
    """

    def __init__(self, d_in, d, odim, hdim=64, layers=3, mp_kind="gcn",
                 seed=0, norm=True):
        if layers < 1:
            raise ValueError("need at least one layer")
        rng = np.random.default_rng(seed)
        self.mp_kind = mp_kind
        self.hdim = hdim
        self.d = d
        self.d_in = d_in
        self.odim = odim
        self.lift = nn.MLP([d_in, hdim, hdim, hdim], rng, norm=norm)
        self.lift_coarse = nn.MLP([d_in, hdim, hdim, hdim], rng, norm=norm)
        self.blocks = [DmpLayer(hdim, d, mp_kind, rng, norm=norm) for _ in range(layers)]
        self.project = nn.MLP([hdim, hdim, hdim, odim], rng, norm=norm)

    def forward_core(self, inputs: np.ndarray, positions: np.ndarray,
                     structure: Structure) -> Tensor:
        """Shared forward over a prebuilt coarse structure."""
        cluster_of = structure.cluster_of
        nclusters = structure.coarse_positions.shape[0]
        rel = structure.coarse_positions[cluster_of] - positions
        dist = np.sqrt(np.einsum("ij,ij->i", rel, rel))[:, None]
        h = self.lift(Tensor(inputs))
        h_coarse = self.lift_coarse(Tensor(structure.coarse_inputs))
        for k, block in enumerate(self.blocks):
            if k > 0:
                # later layers re-seed coarse vectors from the current node state
                h_coarse = segment_sum(h, cluster_of, nclusters) * (
                    1.0 / np.maximum(np.bincount(cluster_of, minlength=nclusters), 1.0)
                )[:, None]
            h_coarse = block.coarsen(h, h_coarse, rel, dist, cluster_of, nclusters)
            h_coarse = block.mp(h_coarse, structure.edges)
            h = block.uncoarsen(h, h_coarse, rel, dist, cluster_of)
        return self.project(h)


def dmp_forward(model: DmpModel, graph: GeometricGraph, t: float,
                spec: ScheduleSpec, stats: dict | None = None) -> Tensor:
    """Full DMP pass on a single graph; output rows follow the input nodes."""
    if graph.n_nodes < 1:
        raise ValueError("empty graph")
    r_t, s_t = eval_schedule(spec, t, graph.n_nodes)
    inputs = node_input(graph, t)
    structure = build_structure(graph, inputs, s_t, r_t)
    if stats is not None:
        stats["r_t"], stats["s_t"] = r_t, s_t
        stats["edges"] = int(structure.edges.shape[0])
    return model.forward_core(inputs, graph.positions, structure)


def baseline_forward(model: DmpModel, graph: GeometricGraph, t: float,
                     kind: str, k: int = 8, seed: int = 0) -> Tensor:
    """Same layer stack at full resolution with a fixed edge builder."""
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}")
    if kind == "random_pred":
        rng = np.random.default_rng(seed)
        return Tensor(rng.standard_normal((graph.n_nodes, model.odim)))
    if kind == "knn_fixed":
        edges = build_knn_edges(graph.positions, k)
    elif kind == "fully_connected":
        edges = build_fully_connected_edges(graph.n_nodes)
    else:
        edges = build_long_short_edges(graph.positions, k, seed)
    inputs = node_input(graph, t)
    structure = build_structure(graph, inputs, graph.n_nodes, k,
                                assignment=identity_assignment(graph), edges=edges)
    return model.forward_core(inputs, graph.positions, structure)


class FlatGat(nn.Module):
    """Single fully connected attention layer used for the noise-vs-range study."""

    def __init__(self, d_in, odim, hdim=32, seed=0):
        rng = np.random.default_rng(seed)
        self.lift = nn.Linear(d_in, hdim, rng)
        self.conv = GatConv(hdim, rng)
        self.project = nn.Linear(hdim, odim, rng)

    def __call__(self, inputs: np.ndarray, edges: np.ndarray) -> Tensor:
        return self.project(self.conv(self.lift(Tensor(inputs)), edges))

    def attention(self, inputs: np.ndarray, edges: np.ndarray) -> np.ndarray:
        return self.conv.attention(self.lift(Tensor(inputs)), edges)
