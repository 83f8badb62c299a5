"""Training, sampling, evaluation, and the empirical studies.

Batches are merged disjoint unions: node inputs of every graph in the batch
are concatenated and the coarse structures (cluster ids, coarse nodes, edge
lists) are offset so one forward pass covers the whole batch. Each graph
keeps its own noise level t during training; sampling shares t across the
batch, which makes the per-graph structures reusable across integration
steps when positions are fixed.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .dmp import (
    BASELINE_KINDS,
    DmpModel,
    FlatGat,
    Structure,
    _segment_mean_np,
    node_input,
)
from .graphs import (
    GeometricGraph,
    build_fully_connected_edges,
    build_knn_edges,
    build_long_short_edges,
    voxel_coarsen,
)
from .interpolant import InterpolantSpec, generate, interpolate, regression_target
from .schedule import ScheduleSpec, default_bounds, eval_schedule
from .tensor import Tensor
from .transport import PointCloud, gw_entropic, w2_exact

METHODS = ("dmp",) + BASELINE_KINDS


def n_workers():
    """Worker cap from the NCGN_THREADS environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("NCGN_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class TrainConfig:
    task: str = "features"
    method: str = "dmp"
    mp_kind: str = "gcn"
    interpolant: str = "cfm"
    schedule_kind: str = "exponential"
    epochs: int = 300
    batch: int = 128
    lr: float = 1e-3
    warmup_epochs: int = 10
    ema_decay: float = 0.95
    hdim: int = 32
    layers: int = 3
    knn_k: int = 8
    nfes: int = 200
    sigma_min: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("features", "positions"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if min(self.epochs, self.batch, self.hdim, self.layers, self.nfes) < 1:
            raise ValueError("epochs, batch, hdim, layers, nfes must be positive")
        if self.lr <= 0 or not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("bad lr or ema_decay")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ValueError("need 0 <= warmup_epochs <= epochs")

    def interpolant_spec(self):
        return InterpolantSpec(kind=self.interpolant, sigma_min=self.sigma_min)


@dataclass
class ConditionMask:
    """Per-node, per-channel known indicator with the known values."""

    known: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.known = np.asarray(self.known, dtype=bool)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.known.shape != self.values.shape:
            raise ValueError("known and values must have the same shape")
        if not np.isfinite(self.values[self.known]).all():
            raise ValueError("known values must be finite where masked")


def _strip(graph: GeometricGraph, task) -> GeometricGraph:
    """Position-generation models see no features (they would leak the target)."""
    if task == "positions" and graph.n_features:
        return GeometricGraph(
            np.zeros((graph.n_nodes, 0)), graph.positions, graph.edges
        )
    return graph


def model_dims(graph: GeometricGraph, task):
    g = _strip(graph, task)
    d_in = g.n_features + g.dim + 1
    odim = g.dim if task == "positions" else g.n_features
    return d_in, odim


def build_model(graph: GeometricGraph, config: TrainConfig) -> DmpModel:
    d_in, odim = model_dims(graph, config.task)
    return DmpModel(d_in, _strip(graph, config.task).dim, odim,
                    hdim=config.hdim, layers=config.layers,
                    mp_kind=config.mp_kind, seed=config.seed, norm=True)


class StructureCache:
    """Voxel assignments and edge lists keyed by position bytes, so fixed
    positions (the transcriptomics grids) are only clustered once."""

    def __init__(self):
        self._store = {}

    def dmp(self, positions, s_t, r_t):
        key = (positions.tobytes(), s_t, r_t)
        if key not in self._store:
            holder = GeometricGraph(np.zeros((positions.shape[0], 0)), positions,
                                    np.zeros((0, 2), dtype=np.intp))
            asg = voxel_coarsen(holder, s_t)
            edges = build_knn_edges(asg.coarse_positions, r_t)
            self._store[key] = (asg.cluster_of, asg.coarse_positions, edges)
        return self._store[key]

    def baseline(self, positions, method, k, seed):
        key = (positions.tobytes(), method, k)
        if key not in self._store:
            n = positions.shape[0]
            if method == "knn_fixed":
                edges = build_knn_edges(positions, k)
            elif method == "fully_connected":
                edges = build_fully_connected_edges(n)
            else:
                edges = build_long_short_edges(positions, k, seed)
            self._store[key] = (np.arange(n, dtype=np.intp), positions, edges)
        return self._store[key]


def _slice_structure(positions, t, config: TrainConfig, cache: StructureCache):
    n = positions.shape[0]
    if config.method == "dmp":
        r_t, s_t = eval_schedule(default_bounds(n, config.schedule_kind), t, n)
        return cache.dmp(positions, s_t, r_t)
    return cache.baseline(positions, config.method, config.knn_k, config.seed)


def merged_forward(model: DmpModel, parts, config: TrainConfig,
                   cache: StructureCache) -> Tensor:
    """One forward pass over a disjoint union.

    ``parts``: list of (positions, inputs, t) per graph. Cluster ids and
    coarse edges are offset so graphs never exchange messages.
    """
    cluster_of, coarse_pos, coarse_in, edges = [], [], [], []
    pos_all, in_all = [], []
    offset = 0
    for positions, inputs, t in parts:
        c_of, c_pos, c_edges = _slice_structure(positions, t, config, cache)
        nclusters = c_pos.shape[0]
        cluster_of.append(c_of + offset)
        coarse_pos.append(c_pos)
        coarse_in.append(_segment_mean_np(inputs, c_of, nclusters))
        if c_edges.size:
            edges.append(c_edges + offset)
        pos_all.append(positions)
        in_all.append(inputs)
        offset += nclusters
    structure = Structure(
        np.concatenate(cluster_of),
        np.concatenate(coarse_pos),
        np.concatenate(coarse_in),
        np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.intp),
    )
    return model.forward_core(np.concatenate(in_all), np.concatenate(pos_all),
                              structure)


def _component(graph, task):
    return graph.positions if task == "positions" else graph.features


def train(graphs, config: TrainConfig, loss_path=None):
    """Flow-matching / diffusion regression over a graph dataset.

    Returns (model, ema, loss_rows) with loss_rows of (epoch, step, loss, lr);
    ``loss_path`` additionally writes them as CSV.
    """
    if not graphs:
        raise ValueError("empty dataset")
    graphs = [_strip(g, config.task) for g in graphs]
    spec = config.interpolant_spec()
    model = build_model(graphs[0], config)
    opt = nn.Adam(model.parameters(), lr=config.lr)
    ema = nn.EMA(model, config.ema_decay)
    cache = StructureCache()
    rng = np.random.default_rng(config.seed)
    rows = []
    step = 0
    for epoch in range(config.epochs):
        lr = config.lr * min(1.0, (epoch + 1) / max(config.warmup_epochs, 1))
        opt.lr = lr
        order = rng.permutation(len(graphs))
        for start in range(0, len(order), config.batch):
            batch = [graphs[i] for i in order[start:start + config.batch]]
            parts, targets = [], []
            for g in batch:
                t = float(rng.uniform())
                noise_seed = int(rng.integers(2**32))
                z1 = _component(g, config.task)
                z0 = rng.standard_normal(z1.shape)
                z_t = interpolate(z0, z1, t, spec, noise_seed)
                target = regression_target(z0, z1, z_t, t, spec, seed=noise_seed)
                noised = g.copy()
                if config.task == "positions":
                    noised.positions = z_t
                else:
                    noised.features = z_t
                parts.append((noised.positions, node_input(noised, t), t))
                targets.append(target)
            pred = merged_forward(model, parts, config, cache)
            diff = pred - Tensor(np.concatenate(targets))
            loss = (diff * diff).mean()
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(f"non-finite loss at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            ema.update(model)
            rows.append((epoch, step, value, lr))
            step += 1
    if loss_path is not None:
        write_csv(loss_path, ("epoch", "step", "loss", "lr"), rows)
    return model, ema, rows


def sample(model: DmpModel, templates, config: TrainConfig, mask=None,
           nfes=None, seed=0, batch=64):
    """Generate one graph per template.

    Templates provide node counts and the fixed component (positions for the
    feature task). ``mask`` is a per-template list of ConditionMask (or None
    entries); known channels are re-clamped after every integration step onto
    the straight path (1 - t) * z0 + t * value, which lands exactly on the
    conditioning values at t = 1.
    """
    nfes = config.nfes if nfes is None else nfes
    templates = [_strip(g, config.task) for g in templates]
    if mask is not None and len(mask) != len(templates):
        raise ValueError("need one mask entry per template")
    model.eval()
    spec = config.interpolant_spec()
    cache = StructureCache()
    rng = np.random.default_rng(seed)
    out = []
    for start in range(0, len(templates), batch):
        chunk = templates[start:start + batch]
        masks = mask[start:start + batch] if mask is not None else [None] * len(chunk)
        sizes = [g.n_nodes for g in chunk]
        splits = np.cumsum(sizes)[:-1]
        merged = GeometricGraph(
            np.concatenate([g.features for g in chunk]),
            np.concatenate([g.positions for g in chunk]),
            np.zeros((0, 2), dtype=np.intp),
        )
        odim = model.odim
        z0 = rng.standard_normal((merged.n_nodes, odim))
        known = np.zeros((merged.n_nodes, odim), dtype=bool)
        values = np.zeros((merged.n_nodes, odim))
        for m, lo, hi in zip(masks, np.r_[0, splits], np.r_[splits, merged.n_nodes]):
            if m is None:
                continue
            if m.known.shape != (hi - lo, odim):
                raise ValueError("mask shape mismatch")
            known[lo:hi] = m.known
            values[lo:hi] = m.values
        if config.task == "positions":
            merged.positions = z0.copy()
        else:
            merged.features = z0.copy()

        def field(graph, t):
            parts = []
            for lo, hi in zip(np.r_[0, splits], np.r_[splits, graph.n_nodes]):
                sub = GeometricGraph(graph.features[lo:hi], graph.positions[lo:hi],
                                     np.zeros((0, 2), dtype=np.intp))
                parts.append((sub.positions, node_input(sub, t), t))
            return merged_forward(model, parts, config, cache).data

        def clamp(graph, t):
            if not known.any():
                return
            comp = _component(graph, config.task)
            comp[known] = (1.0 - t) * z0[known] + t * values[known]

        clamp(merged, 0.0)
        result = generate(field, merged, spec, nfes, task=config.task,
                          seed=int(rng.integers(2**32)), callback=clamp)
        for lo, hi in zip(np.r_[0, splits], np.r_[splits, merged.n_nodes]):
            out.append(GeometricGraph(result.features[lo:hi].copy(),
                                      result.positions[lo:hi].copy(),
                                      np.zeros((0, 2), dtype=np.intp)))
    model.train()
    return out


def random_generations(templates, task, seed=0):
    """Standard-normal predictions in place of the generated component."""
    rng = np.random.default_rng(seed)
    out = []
    for g in templates:
        g = g.copy()
        if task == "positions":
            g.positions = rng.standard_normal(g.positions.shape)
        else:
            g.features = rng.standard_normal(g.features.shape)
        out.append(g)
    return out


# ----------------------------------------------------------------------
# evaluation


def _pool(graphs, task):
    if task == "positions":
        return np.concatenate([g.positions for g in graphs])
    return np.concatenate(
        [np.concatenate([g.positions, g.features], axis=1) for g in graphs]
    )


def evaluate_w2(generated, reference, task, replicates=5, subsample=1024,
                seed=0):
    """Pooled-subsample 2-Wasserstein protocol.

    Pools every node of every graph on each side, draws ``replicates``
    independent subsamples of ``subsample`` points per side, and reports the
    mean and standard deviation of w2_exact. Pools smaller than the
    subsample are used whole, flagged via ``warned``.
    """
    gen, ref = _pool(generated, task), _pool(reference, task)
    m = min(subsample, len(gen), len(ref))
    warned = m < subsample

    def one(i):
        rng = np.random.default_rng(seed + i)
        a = gen[rng.choice(len(gen), size=m, replace=False)]
        b = ref[rng.choice(len(ref), size=m, replace=False)]
        return w2_exact(PointCloud(a), PointCloud(b))

    workers = min(n_workers(), replicates)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(one, range(replicates)))
    else:
        vals = [one(i) for i in range(replicates)]
    return {"mean": float(np.mean(vals)), "std": float(np.std(vals)),
            "warned": warned, "values": vals}


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v)
                             for v in row) + "\n")


# ----------------------------------------------------------------------
# conditional task masks (features task; positions are always observed)


TASK_NAMES = ("temporal_trajectory", "temporal_interpolation",
              "gene_imputation", "spatial_imputation", "gene_knockout")


def task_mask(graph: GeometricGraph, name, gene=1,
              knockout_value=-0.5) -> ConditionMask:
    """Conditioning pattern for the named transcriptomics task.

    Positions are (time, space); the first coordinate orders timepoints.
    gene_knockout clamps one gene to ``knockout_value`` everywhere and
    generates the rest; gene_imputation observes all but one gene.
    """
    n, f = graph.n_nodes, graph.n_features
    known = np.zeros((n, f), dtype=bool)
    values = graph.features.copy()
    times = graph.positions[:, 0]
    if name == "temporal_trajectory":
        known[times == times.min()] = True
    elif name == "temporal_interpolation":
        known[(times == times.min()) | (times == times.max())] = True
    elif name == "gene_imputation":
        known[:, :] = True
        known[:, gene] = False
    elif name == "spatial_imputation":
        space = graph.positions[:, 1]
        lo, hi = np.quantile(space, [1.0 / 3.0, 2.0 / 3.0])
        known[(space < lo) | (space > hi)] = True
    elif name == "gene_knockout":
        known[:, gene] = True
        values[:, gene] = knockout_value
    else:
        raise ValueError(f"unknown task name {name!r}")
    return ConditionMask(known, values)


# ----------------------------------------------------------------------
# studies


def train_flat_gat(graphs, epochs=50, batch=32, lr=1e-4, hdim=32, seed=0,
                   sigma_min=1e-3):
    """Train the single-layer fully connected attention model to regress the
    position flow field; used by the attention study."""
    graphs = [_strip(g, "positions") for g in graphs]
    d_in, odim = model_dims(graphs[0], "positions")
    model = FlatGat(d_in, odim, hdim=hdim, seed=seed)
    opt = nn.Adam(model.parameters(), lr=lr)
    spec = InterpolantSpec(kind="cfm", sigma_min=sigma_min)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(len(graphs))
        for start in range(0, len(order), batch):
            losses = []
            opt.zero_grad()
            for i in order[start:start + batch]:
                g = graphs[i]
                t = float(rng.uniform())
                z0 = rng.standard_normal(g.positions.shape)
                z_t = interpolate(z0, g.positions, t, spec,
                                  int(rng.integers(2**32)))
                noised = GeometricGraph(g.features, z_t, g.edges)
                edges = build_fully_connected_edges(g.n_nodes)
                pred = model(node_input(noised, t), edges)
                diff = pred - Tensor(g.positions - z0)
                losses.append((diff * diff).mean())
            loss = losses[0]
            for extra in losses[1:]:
                loss = loss + extra
            loss = loss * (1.0 / len(losses))
            if not np.isfinite(float(loss.data)):
                raise RuntimeError("non-finite flat-gat loss")
            loss.backward()
            opt.step()
    return model


def attention_study(model: FlatGat, graphs, bins=10,
                    t_buckets=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
                    sigma_min=1e-3, seed=0, max_graphs=20):
    """Attention mass vs pair distance per noise bucket.

    Rows (t_bucket, bin_lo, bin_hi, weight) with each bucket's weights
    normalized to sum 1; bin edges are global across buckets.
    """
    graphs = [_strip(g, "positions") for g in graphs[:max_graphs]]
    spec = InterpolantSpec(kind="cfm", sigma_min=sigma_min)
    rng = np.random.default_rng(seed)
    collected = {t: ([], []) for t in t_buckets}
    for t in t_buckets:
        for g in graphs:
            z0 = rng.standard_normal(g.positions.shape)
            z_t = interpolate(z0, g.positions, t, spec, int(rng.integers(2**32)))
            noised = GeometricGraph(g.features, z_t, g.edges)
            edges = build_fully_connected_edges(g.n_nodes)
            alpha = model.attention(node_input(noised, t), edges)
            rel = z_t[edges[:, 0]] - z_t[edges[:, 1]]
            dists = np.sqrt(np.einsum("ij,ij->i", rel, rel))
            collected[t][0].append(dists)
            collected[t][1].append(alpha)
    max_dist = max(d.max() for pair in collected.values() for d in pair[0])
    edges_out = np.linspace(0.0, max_dist, bins + 1)
    rows = []
    for t in t_buckets:
        dists = np.concatenate(collected[t][0])
        alpha = np.concatenate(collected[t][1])
        idx = np.clip(np.digitize(dists, edges_out) - 1, 0, bins - 1)
        weights = np.bincount(idx, weights=alpha, minlength=bins)
        weights = weights / weights.sum()
        for b in range(bins):
            rows.append((float(t), float(edges_out[b]), float(edges_out[b + 1]),
                         float(weights[b])))
    return rows


def _pooled_coarse(positions, n_clusters, pooling):
    holder = GeometricGraph(np.zeros((positions.shape[0], 0)), positions,
                            np.zeros((0, 2), dtype=np.intp))
    asg = voxel_coarsen(holder, n_clusters)
    if pooling == "mean":
        return asg.coarse_positions
    if pooling != "max":
        raise ValueError(f"unknown pooling {pooling!r}")
    out = np.full((asg.n_clusters, positions.shape[1]), -np.inf)
    np.maximum.at(out, asg.cluster_of, positions)
    return out


def gw_study(graphs, noise_grid=(0.9, 0.7, 0.5, 0.3, 0.1),
             cluster_grid=(4, 8, 16, 32, 64), pooling="mean",
             noise_target="positions", n_shapes=20, n_seeds=3,
             sigma_max=1.0, eps=0.05, iters=50, seed=0):
    """Gromov-Wasserstein between coarse-grained noised shapes and originals.

    For every noise level t (variance-exploding noise on the chosen
    component) and cluster count, voxel-coarsens the noised cloud, pools per
    flag, and averages gw_entropic against the clean cloud over shapes and
    noise seeds. Returns (rows, argmin_rows) with rows (t, clusters, gw_mean)
    and argmin_rows (t, argmin_clusters).
    """
    if noise_target != "positions":
        raise ValueError("the study coarse-grains positions")
    graphs = graphs[:n_shapes]
    spec = InterpolantSpec(kind="ve", sigma_max=sigma_max)
    rows = []
    argmin_rows = []
    for t in noise_grid:
        means = []
        for c in cluster_grid:
            vals = []
            for gi, g in enumerate(graphs):
                clean = PointCloud(g.positions)
                for s in range(n_seeds):
                    noise_seed = seed + 1000 * gi + s
                    noised = interpolate(np.zeros_like(g.positions), g.positions,
                                         t, spec, noise_seed)
                    coarse = _pooled_coarse(noised, c, pooling)
                    vals.append(gw_entropic(PointCloud(coarse), clean,
                                            eps=eps, iters=iters))
            mean = float(np.mean(vals))
            means.append(mean)
            rows.append((float(t), int(c), mean))
        argmin_rows.append((float(t), int(cluster_grid[int(np.argmin(means))])))
    return rows, argmin_rows


def ablate_depth(train_graphs, test_graphs, config: TrainConfig,
                 depths=(2, 4, 8, 16), seed=0):
    """Config sweep over layer counts; rows (layers, w2_mean, w2_std)."""
    rows = []
    for k in depths:
        cfg = replace(config, layers=k)
        model, ema, _ = train(train_graphs, cfg)
        ema.copy_to(model)
        generated = sample(model, test_graphs, cfg, seed=seed)
        result = evaluate_w2(generated, test_graphs, cfg.task, seed=seed)
        rows.append((int(k), result["mean"], result["std"]))
    return rows
