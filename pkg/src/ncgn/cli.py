"""Command-line entry point.

    ncgn <command> [--config FILE] [key=value ...]

Commands: simulate-data, make-shapes, train, sample, eval, theory,
attention-study, gw-study, ablate-depth. Every numeric artifact is CSV under
``out_dir``; each run echoes its resolved configuration to
``out_dir/config.resolved``. NCGN_THREADS caps worker counts.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import nn, theory
from .config import ConfigError, parse_config, write_resolved
from .dataset import (
    generate_rd_dataset,
    generate_shape_dataset,
    load_dataset,
    save_dataset,
)
from .engine import (
    TrainConfig,
    ablate_depth,
    attention_study,
    build_model,
    evaluate_w2,
    gw_study,
    random_generations,
    sample,
    task_mask,
    train,
    train_flat_gat,
    write_csv,
)
from .graphs import load_graph, save_graph

COMMANDS = ("simulate-data", "make-shapes", "train", "sample", "eval",
            "theory", "attention-study", "gw-study", "ablate-depth")


def _train_config(config):
    return TrainConfig(
        task=config["task"],
        method=config["method"],
        mp_kind=config["mp_kind"],
        interpolant=config["interpolant.kind"],
        schedule_kind=config["schedule.kind"],
        epochs=config["epochs"],
        batch=config["batch"],
        lr=config["lr"],
        warmup_epochs=config["warmup_epochs"],
        ema_decay=config["ema_decay"],
        hdim=config["hdim"],
        layers=config["layers"],
        knn_k=config["knn_k"],
        nfes=config["nfes"],
        sigma_min=config["interpolant.sigma_min"],
        seed=config["seed"],
    )


def _require_dataset(config):
    path = config["dataset"]
    if not path:
        raise ConfigError("this command needs dataset=<path>")
    if not os.path.isdir(path):
        raise FileNotFoundError(f"dataset directory not found: {path}")
    return load_dataset(path)


def _load_model(config, template):
    cfg = _train_config(config)
    model = build_model(template, cfg)
    path = config["checkpoint"] or os.path.join(config["out_dir"], "ema.ckpt")
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    nn.load_into(model, nn.load_checkpoint(path))
    return model, cfg


def cmd_simulate_data(config):
    ds = generate_rd_dataset(
        n_train=config["n_train"], n_test=config["n_test"],
        seed=config["seed"], sign_convention=config["convention"],
    )
    save_dataset(config["out_dir"], ds)
    return f"wrote {len(ds.train)} train / {len(ds.test)} test graphs"


def cmd_make_shapes(config):
    ds = generate_shape_dataset(
        n_train=config["n_train"], n_test=config["n_test"],
        n_points=config["n_points"], seed=config["seed"],
    )
    save_dataset(config["out_dir"], ds)
    return f"wrote {len(ds.train)} train / {len(ds.test)} test shapes"


def cmd_train(config):
    ds = _require_dataset(config)
    cfg = _train_config(config)
    out = config["out_dir"]
    model, ema, rows = train(ds.train, cfg,
                             loss_path=os.path.join(out, "loss.csv"))
    nn.save_checkpoint(os.path.join(out, "model.ckpt"), model.state_arrays())
    shadow_model = build_model(ds.train[0], cfg)
    ema.copy_to(shadow_model)
    nn.save_checkpoint(os.path.join(out, "ema.ckpt"), shadow_model.state_arrays())
    return f"final loss {rows[-1][2]:.6f} over {len(rows)} steps"


def cmd_sample(config):
    ds = _require_dataset(config)
    templates = ds.test
    if config["n_samples"]:
        reps = -(-config["n_samples"] // len(templates))
        templates = (templates * reps)[: config["n_samples"]]
    out = config["out_dir"]
    cfg = _train_config(config)
    if config["method"] == "random_pred":
        generated = random_generations(templates, cfg.task, seed=config["seed"])
    else:
        model, cfg = _load_model(config, ds.train[0])
        mask = None
        if config["mask_task"]:
            mask = [task_mask(g, config["mask_task"]) for g in templates]
        generated = sample(model, templates, cfg, mask=mask,
                           seed=config["seed"])
    sample_dir = os.path.join(out, "samples")
    os.makedirs(sample_dir, exist_ok=True)
    for i, g in enumerate(generated):
        save_graph(os.path.join(sample_dir, f"{i:05d}.graph"), g)
    return f"wrote {len(generated)} samples to {sample_dir}"


def cmd_eval(config):
    ds = _require_dataset(config)
    sample_dir = os.path.join(config["out_dir"], "samples")
    if not os.path.isdir(sample_dir):
        raise FileNotFoundError(f"samples directory not found: {sample_dir}")
    names = sorted(n for n in os.listdir(sample_dir) if n.endswith(".graph"))
    generated = [load_graph(os.path.join(sample_dir, n)) for n in names]
    result = evaluate_w2(generated, ds.test, config["task"],
                         seed=config["seed"])
    row = (config["task"], config["method"], config["mp_kind"],
           result["mean"], result["std"], config["seed"])
    write_csv(os.path.join(config["out_dir"], "metrics.csv"),
              ("task", "method", "mp_kind", "w2_mean", "w2_std", "seed"),
              [row])
    flag = " (pool smaller than subsample)" if result["warned"] else ""
    return f"w2 {result['mean']:.6f} +/- {result['std']:.6f}{flag}"


def cmd_theory(config):
    snrs = np.logspace(np.log10(config["theory.snr_lo"]),
                       np.log10(config["theory.snr_hi"]),
                       config["theory.n_snrs"])
    rows = theory.radius_sweep(snrs)
    out = config["out_dir"]
    write_csv(os.path.join(out, "theory.csv"), ("snr", "r_star", "mi"), rows)
    grid = [0.0, 0.25, 0.5, 0.75, 0.99]
    prop_rows = []
    for t in grid:
        for rho in [-0.9, -0.45, 0.0, 0.45, 0.9]:
            printed, consistent = theory.expected_sq_distance(t, 1.0, rho)
            mc = theory.mc_sq_distance(t, 1.0, rho, n_draws=10**5,
                                       seed=config["seed"])
            prop_rows.append((t, rho, printed, consistent, mc,
                              int(abs(mc - printed) < abs(mc - consistent))))
    write_csv(os.path.join(out, "prop1.csv"),
              ("t", "rho", "as_printed", "covariance_consistent",
               "mc", "printed_closer"), prop_rows)
    return (f"{len(rows)} radius rows, r* range "
            f"[{min(r[1] for r in rows):.3f}, {max(r[1] for r in rows):.3f}]")


def cmd_attention_study(config):
    ds = _require_dataset(config)
    model = train_flat_gat(ds.train, epochs=config["attention.epochs"],
                           hdim=config["hdim"], lr=config["lr"],
                           seed=config["seed"])
    rows = attention_study(model, ds.test, bins=config["attention.bins"],
                           seed=config["seed"])
    write_csv(os.path.join(config["out_dir"], "attention.csv"),
              ("t_bucket", "bin_lo", "bin_hi", "weight"), rows)
    return f"{len(rows)} attention rows"


def cmd_gw_study(config):
    ds = _require_dataset(config)
    rows, argmin_rows = gw_study(
        ds.train, pooling=config["gw.pooling"], n_shapes=config["n_shapes"],
        n_seeds=config["n_seeds"], eps=config["gw.eps"],
        iters=config["gw.iters"], seed=config["seed"],
    )
    out = config["out_dir"]
    write_csv(os.path.join(out, "gw.csv"), ("t", "clusters", "gw_mean"), rows)
    write_csv(os.path.join(out, "gw_argmin.csv"), ("t", "argmin_clusters"),
              argmin_rows)
    argmins = " ".join(str(r[1]) for r in argmin_rows)
    return f"argmin clusters by noise level: {argmins}"


def cmd_ablate_depth(config):
    ds = _require_dataset(config)
    depths = tuple(int(x) for x in config["depths"].split())
    cfg = _train_config(config)
    rows = ablate_depth(ds.train, ds.test, cfg, depths=depths,
                        seed=config["seed"])
    write_csv(os.path.join(config["out_dir"], "depth.csv"),
              ("layers", "w2_mean", "w2_std"), rows)
    best = min(rows, key=lambda r: r[1])
    return f"best depth {best[0]} at w2 {best[1]:.6f}"


HANDLERS = {
    "simulate-data": cmd_simulate_data,
    "make-shapes": cmd_make_shapes,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "theory": cmd_theory,
    "attention-study": cmd_attention_study,
    "gw-study": cmd_gw_study,
    "ablate-depth": cmd_ablate_depth,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="ncgn", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="key = value file")
    parser.add_argument("overrides", nargs="*", help="key=value overrides")
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config, args.overrides)
        write_resolved(config, config["out_dir"])
        summary = HANDLERS[args.command](config)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"ncgn {args.command}: {exc}", file=sys.stderr)
        return 1
    print(f"ncgn {args.command}: {summary}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
