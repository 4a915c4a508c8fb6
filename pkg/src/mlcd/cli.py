"""Command line interface: ``mlcd <step> --config FILE [--seed N] [--out DIR]``.

The single-step commands chain through files in the output directory:
``sample`` writes orbits.csv, ``cluster`` reads it and writes labeled.csv,
``train`` writes net.json, ``decompose`` writes regions.json and ``homology``
writes homology.json. ``--input`` overrides the file a step reads.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path


from .config import load_config
from .decomposition import RegionAssignment, decompose
from .dynamics.ode import iterate_time1
from .dynamics.sampling import latin_hypercube, stabilization_index
from .dynamics.systems import get_system
from .harness import benchmark_report, prepare_data, run_experiment
from .homology import ExpectedBetti, conley_check, expected_table, morse_report, region_betti
from .labeling import LabeledDataset, align_to_anchors, balance, label_orbits
from .network import ConstrainedNet, init_constrained, split, train

log = logging.getLogger("mlcd")


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=float)
    log.info("wrote %s", path)


def cmd_sample(cfg, out: Path, args):
    sys_ = get_system(cfg.system)
    n = int(round(cfg.sampling.n_points / (1.0 - cfg.training.test_fraction)))
    ens = iterate_time1(sys_, latin_hypercube(sys_.domain, n, cfg.seed), cfg.sampling.horizon,
                        escape_factor=cfg.sampling.escape_factor)
    ens.to_csv(out / "orbits.csv")
    _dump(out / "sample.json", {"points": n, "horizon": cfg.sampling.horizon,
                                "escaped": int(ens.escaped.sum()),
                                "stabilization_index": stabilization_index(ens)})


def cmd_cluster(cfg, out: Path, args):
    from .dynamics.ode import OrbitEnsemble

    ens = OrbitEnsemble.from_csv(args.input or out / "orbits.csv")
    ds, diag = label_orbits(ens, cfg.num_labels, seed=cfg.seed,
                            max_points=cfg.sampling.max_cluster_points)
    sys_ = get_system(cfg.system)
    expected = expected_table(cfg.system, sys_.params.get("T"))
    if expected.anchors is not None and len(expected.anchors) == ds.num_labels:
        ds = ds.relabel(align_to_anchors(ds.attractor_samples, expected.anchors))
    ds.to_csv(out / "labeled.csv")
    diag.to_csv(out / "persistence.csv")
    log.info("%d labels, counts %s", ds.num_labels, ds.counts().tolist())


def cmd_train(cfg, out: Path, args):
    data = LabeledDataset.from_csv(args.input or out / "labeled.csv")
    sys_ = get_system(cfg.system)
    tcfg = dataclasses.replace(cfg.training, seed=cfg.seed)
    tr, te = split(data, tcfg.test_fraction, cfg.seed)
    if cfg.sampling.balance == "oversample":
        tr = balance(tr, seed=cfg.seed)
    net = init_constrained(sys_.domain, cfg.q, data.num_labels, cfg.seed)
    result = train(net, tr, te, tcfg)
    result.net.save(out / "net.json")
    with open(out / "curves.csv", "w") as fh:
        fh.write("epoch,train_loss,test_loss\n")
        for i, (a, b) in enumerate(zip(result.train_losses, result.test_losses), start=1):
            fh.write(f"{i},{a:.17g},{b:.17g}\n")
    _dump(out / "train.json", {"final_test_loss": result.final_test_loss,
                               "converged": result.converged, "spans": result.spans,
                               "epochs": len(result.train_losses), "error": result.error})


def cmd_decompose(cfg, out: Path, args):
    net = ConstrainedNet.load(args.input or out / "net.json")
    sys_ = get_system(cfg.system)
    eps = args.epsilon if args.epsilon is not None else cfg.epsilons[0]
    assignment = decompose(net, sys_.domain, eps)
    assignment.save(out / "regions.json")
    if sys_.dim == 2:
        assignment.to_plot_csv(out / "cells.csv")
    log.info("%d cells, tags %s", len(assignment.grid), assignment.counts())


def _load_expected(args, cfg) -> ExpectedBetti:
    sys_ = get_system(cfg.system)
    if args.expected is None:
        return expected_table(cfg.system, sys_.params.get("T"))
    with open(args.expected) as fh:
        raw = json.load(fh)
    raw = raw.get(cfg.system, raw)
    return ExpectedBetti.from_dict(raw, sys_.params.get("T"))


def cmd_homology(cfg, out: Path, args):
    assignment = RegionAssignment.load(args.input or out / "regions.json")
    betti = region_betti(assignment)
    result = conley_check(assignment, _load_expected(args, cfg), betti)
    _dump(out / "homology.json", {**result.to_dict(),
                                  "morse_poset": morse_report(assignment, betti).to_dict()})


def cmd_experiment(cfg, out: Path, args):
    report, _ = run_experiment(cfg, out, benchmark=args.benchmark)
    log.info("success rates %s, verdict %s", report["success_rate"],
             (report["heuristic"] or {}).get("verdict"))


def cmd_benchmark(cfg, out: Path, args):
    _dump(out / "benchmark.json", benchmark_report(cfg, prepare_data(cfg)))


COMMANDS = {"sample": cmd_sample, "cluster": cmd_cluster, "train": cmd_train,
            "decompose": cmd_decompose, "homology": cmd_homology,
            "experiment": cmd_experiment, "benchmark": cmd_benchmark}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mlcd", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--input", default=None, help="input file of a single step")
    p.add_argument("--expected", default=None, help="expected Betti JSON for homology")
    p.add_argument("--epsilon", type=float, default=None, help="epsilon for decompose")
    p.add_argument("--benchmark", action="store_true", help="also run the regular-grid search")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    COMMANDS[args.command](cfg, out, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
