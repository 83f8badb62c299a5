"""Dataset generation and on-disk layout.

A dataset directory holds `train/*.graph`, `test/*.graph`, and a plain-text
`manifest` of `key: value` lines recording counts, the normalization
constants, the seed, and (for reaction-diffusion data) the sign convention.
"""

from __future__ import annotations

import os

import numpy as np

from .graphs import GeometricGraph, load_graph, save_graph
from .reaction_diffusion import (
    RdParams,
    build_spatiotemporal_graph,
    simulate_rd,
)
from .shapes import SHAPE_KINDS, ShapeSpec, make_shape


class Dataset:
    def __init__(self, train, test, manifest):
        self.train = train
        self.test = test
        self.manifest = manifest


def _write_manifest(path, manifest):
    with open(path, "w") as fh:
        for key, val in manifest.items():
            fh.write(f"{key}: {val}\n")


def _read_manifest(path):
    manifest = {}
    with open(path) as fh:
        for ln_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if ": " not in line:
                raise ValueError(f"{path} line {ln_no}: expected 'key: value'")
            key, val = line.split(": ", 1)
            manifest[key] = val
    return manifest


def save_dataset(path, dataset: Dataset):
    for split, graphs in (("train", dataset.train), ("test", dataset.test)):
        os.makedirs(os.path.join(path, split), exist_ok=True)
        for i, g in enumerate(graphs):
            save_graph(os.path.join(path, split, f"{i:05d}.graph"), g)
    _write_manifest(os.path.join(path, "manifest"), dataset.manifest)


def load_dataset(path) -> Dataset:
    manifest = _read_manifest(os.path.join(path, "manifest"))
    splits = []
    for split in ("train", "test"):
        directory = os.path.join(path, split)
        names = sorted(n for n in os.listdir(directory) if n.endswith(".graph"))
        splits.append([load_graph(os.path.join(directory, n)) for n in names])
    return Dataset(splits[0], splits[1], manifest)


def generate_rd_dataset(n_train=10000, n_test=2000, seed=0,
                        sign_convention="damped", params: RdParams | None = None,
                        train_shape=(10, 10), test_shape=(8, 12)) -> Dataset:
    """Simulate reaction-diffusion trajectories and cut them into graphs.

    Train graphs use train_shape = (n_space, n_time) nodes, test graphs
    test_shape, per the two discretizations. Feature normalization constants
    are global over every subsampled node of both splits.
    """
    if params is None:
        params = RdParams(sign_convention=sign_convention)
    raw = {"train": [], "test": []}
    for split, count, (n_space, n_time), offset in (
        ("train", n_train, train_shape, 0),
        ("test", n_test, test_shape, n_train),
    ):
        for i in range(count):
            traj = simulate_rd(params, seed=seed + offset + i)
            raw[split].append(
                build_spatiotemporal_graph(traj, n_space, n_time,
                                           bounds=np.array([[0.0, 1.0]] * 3))
            )
    # graphs above carry raw gene values shifted by -0.5; undo the shift and
    # rescale with the dataset-global per-gene bounds
    all_feats = np.concatenate(
        [g.features + 0.5 for split in raw.values() for g in split]
    )
    lo, hi = all_feats.min(axis=0), all_feats.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    for split in raw.values():
        for g in split:
            g.features = (g.features + 0.5 - lo) / span - 0.5
    manifest = {
        "kind": "reaction-diffusion",
        "n_train": str(n_train),
        "n_test": str(n_test),
        "train_shape": f"{train_shape[0]} {train_shape[1]}",
        "test_shape": f"{test_shape[0]} {test_shape[1]}",
        "seed": str(seed),
        "convention": params.sign_convention,
        "feature_min": " ".join(repr(float(v)) for v in lo),
        "feature_max": " ".join(repr(float(v)) for v in hi),
    }
    return Dataset(raw["train"], raw["test"], manifest)


def generate_shape_dataset(n_train=500, n_test=100, n_points=64,
                           seed=0) -> Dataset:
    """Surface point clouds cycling through the five shape kinds."""
    def build(count, offset):
        graphs = []
        for i in range(count):
            kind = SHAPE_KINDS[i % len(SHAPE_KINDS)]
            graphs.append(make_shape(ShapeSpec(kind, n_points, seed + offset + i)))
        return graphs

    manifest = {
        "kind": "shapes",
        "n_train": str(n_train),
        "n_test": str(n_test),
        "n_points": str(n_points),
        "seed": str(seed),
        "feature_min": "-0.5 -0.5 -0.5",
        "feature_max": "0.5 0.5 0.5",
    }
    return Dataset(build(n_train, 0), build(n_test, n_train), manifest)


def dataset_bounds(manifest) -> np.ndarray:
    """Per-channel (min, max) recorded in a manifest; 3 x 2."""
    lo = np.array([float(v) for v in manifest["feature_min"].split()])
    hi = np.array([float(v) for v in manifest["feature_max"].split()])
    return np.column_stack([lo, hi])
