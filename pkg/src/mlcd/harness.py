"""End-to-end experiments: sample, cluster, train, decompose, check homology.

One labeled dataset is built per experiment. Each realization then draws its
own train/test split, initialization and mini-batch order from a seed derived
from the master seed and the realization index, so realizations are
independent and can run in any order or in parallel.
"""
from __future__ import annotations

import dataclasses
import json
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from .benchmark import IntegrationLabeler, NearestNeighborLabeler, min_grid_search
from .config import ExperimentConfig
from .decomposition import classify_cells, enumerate_cells, extract_arrangement, vertex_outputs
from .dynamics.ode import OrbitEnsemble, iterate_time1
from .dynamics.sampling import latin_hypercube
from .dynamics.systems import SystemSpec, get_system
from .homology import ComplexTooLarge, ExpectedBetti, conley_check, expected_table, region_betti
from .labeling import LabeledDataset, align_to_anchors, balance, label_orbits
from .network import ConstrainedNet, init_constrained, split, train

WORKERS_ENV = "MLCD_WORKERS"
MIN_HEURISTIC_RUNS = 10
HEURISTIC_FRACTION = 0.1
CHUNK = 20_000


@dataclass
class PreparedData:
    system: SystemSpec
    dataset: LabeledDataset
    expected: ExpectedBetti


def realization_seed(master: int, index: int) -> int:
    """Counter-based seed: the same (master, index) always gives the same stream."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


def terminal_ensemble(sys: SystemSpec, points, horizon: int, escape_factor: float,
                      chunk: int = CHUNK) -> OrbitEnsemble:
    """Integrate in chunks and keep only the initial and final snapshots."""
    pts = np.atleast_2d(points)
    finals, escaped = [], []
    for start in range(0, len(pts), chunk):
        ens = iterate_time1(sys, pts[start:start + chunk], horizon, escape_factor=escape_factor)
        finals.append(ens.final)
        escaped.append(ens.escaped)
    return OrbitEnsemble(np.stack([pts, np.vstack(finals)]), np.concatenate(escaped))


def _known_basin_dataset(sys: SystemSpec, n_total: int, ratios, seed: int) -> LabeledDataset:
    """Ratioed sample of an ellipsoidal system labeled from its known separatrix |y| = 2.

    Inner points are drawn uniformly in the separatrix ellipsoid, outer points
    uniformly in the rest of X; no orbit is integrated.
    """
    T = sys.params["T"]
    Tinv = np.linalg.inv(T)
    d = sys.dim
    rng = np.random.default_rng(seed)
    n_out = int(round(n_total * ratios[0] / sum(ratios)))
    n_in = n_total - n_out
    g = rng.standard_normal((n_in, d))
    y = 2.0 * g / np.linalg.norm(g, axis=1, keepdims=True) * rng.random((n_in, 1)) ** (1.0 / d)
    inner = y @ T.T
    outer = []
    while sum(len(o) for o in outer) < n_out:
        x = rng.uniform(sys.domain.lower, sys.domain.upper, size=(4 * n_out, d))
        outer.append(x[np.linalg.norm(x @ Tinv.T, axis=1) > 2.0])
    outer = np.vstack(outer)[:n_out]
    theta = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    circle = np.zeros((theta.size, d))
    circle[:, 0], circle[:, 1] = np.cos(theta), np.sin(theta)
    samples = [3.0 * circle @ T.T, circle @ T.T]
    points = np.vstack([outer, inner])
    labels = np.concatenate([np.zeros(n_out, int), np.ones(n_in, int)])
    return LabeledDataset(points, labels, 2, samples)


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    """Sample X, iterate the time-1 map, cluster and align labels with the expected table."""
    sys = get_system(cfg.system)
    expected = expected_table(cfg.system, sys.params.get("T"))
    s = cfg.sampling
    n_total = int(round(s.n_points / (1.0 - cfg.training.test_fraction)))
    if not isinstance(s.balance, str) and "T" in sys.params:
        ds = _known_basin_dataset(sys, n_total, s.balance, cfg.seed)
    else:
        pts = latin_hypercube(sys.domain, n_total, cfg.seed)
        ens = terminal_ensemble(sys, pts, s.horizon, s.escape_factor)
        ds, _ = label_orbits(ens, cfg.num_labels, seed=cfg.seed,
                             max_points=s.max_cluster_points)
    if expected.anchors is not None and len(expected.anchors) == ds.num_labels:
        ds = ds.relabel(align_to_anchors(ds.attractor_samples, expected.anchors))
    return PreparedData(sys, ds, expected)


def _balanced(train_set: LabeledDataset, strategy, seed) -> LabeledDataset:
    if isinstance(strategy, str):
        return train_set if strategy == "none" else balance(train_set, strategy, seed=seed)
    return train_set  # ratioed data is already drawn at the target ratio


def evaluate_net(net: ConstrainedNet, data: PreparedData, epsilons) -> dict:
    """Decompose with a trained net and check every epsilon; returns per-epsilon results."""
    grid = enumerate_cells(extract_arrangement(net, data.system.domain), data.system.domain)
    values = vertex_outputs(net, grid)
    out, cache = {}, {}
    for eps in epsilons:
        assignment = classify_cells(net, grid, eps, values)
        key = assignment.tags.tobytes()
        if key not in cache:
            try:
                res = conley_check(assignment, data.expected, region_betti(assignment))
                cache[key] = {"betti": res.per_tag, "success": res.success, "reason": res.reason}
            except ComplexTooLarge as exc:
                cache[key] = {"betti": None, "success": False, "reason": str(exc)}
        out[f"{eps:g}"] = dict(cache[key])
    return {"cell_count": len(grid), "per_epsilon": out}


def run_realization(cfg: ExperimentConfig, data: PreparedData, index: int) -> dict:
    """Train one network and check its decomposition; never raises for pipeline failures."""
    t0 = time.perf_counter()
    seed = realization_seed(cfg.seed, index)
    rec = {"index": index, "seed": seed, "final_test_loss": None, "converged": False,
           "spans": False, "excluded": True, "reason": None, "cell_count": None,
           "per_epsilon": {}, "epochs": 0, "net": None}
    try:
        tr, te = split(data.dataset, cfg.training.test_fraction, seed)
        tr = _balanced(tr, cfg.sampling.balance, seed)
        net = init_constrained(data.system.domain, cfg.q, data.dataset.num_labels, seed)
        tcfg = dataclasses.replace(cfg.training, seed=seed)
        result = train(net, tr, te, tcfg)
        rec.update(final_test_loss=result.final_test_loss, converged=result.converged,
                   spans=result.spans, epochs=len(result.train_losses),
                   net=result.net.to_dict())
        if result.error:
            rec["reason"] = result.error
        elif not result.spans:
            rec["reason"] = "directions do not span"
        elif not result.converged:
            rec["reason"] = "training did not converge"
        else:
            rec.update(evaluate_net(result.net, data, cfg.epsilons), excluded=False)
    except Exception as exc:  # recorded, and the realization is excluded
        rec["reason"] = f"{type(exc).__name__}: {exc}"
        rec["excluded"] = True
    rec["wall_time"] = time.perf_counter() - t0
    return rec


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def run_records(cfg: ExperimentConfig, data: PreparedData) -> list:
    job = partial(run_realization, cfg, data)
    indices = range(cfg.realizations)
    workers = _workers()
    if workers == 1:
        records = [job(i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(job, indices))
    return sorted(records, key=lambda r: r["index"])


# -- statistics --------------------------------------------------------------------

def expressiveness_heuristic(report_or_pairs) -> dict:
    """Is there a loss threshold below which every realization succeeds?

    Accepts a report (its ``scatter`` rows are used) or ``(loss, success)``
    pairs of included realizations. The verdict is ``trustworthy`` when some
    threshold admits at least 10% of the realizations and only successes.
    """
    if isinstance(report_or_pairs, dict):
        pairs = [(r["final_test_loss"], r["success"]) for r in report_or_pairs["scatter"]]
    else:
        pairs = list(report_or_pairs)
    n = len(pairs)
    if n < MIN_HEURISTIC_RUNS:
        raise ValueError(f"need at least {MIN_HEURISTIC_RUNS} included realizations, got {n}")
    pairs.sort(key=lambda p: p[0])
    losses = [p[0] for p in pairs]
    prefix = 0
    while prefix < n and pairs[prefix][1]:
        prefix += 1
    # a threshold can only cut between distinct losses
    j = prefix
    while 0 < j < n and losses[j] == losses[j - 1]:
        j -= 1
    trustworthy = j >= HEURISTIC_FRACTION * n and j > 0
    threshold = None
    if trustworthy:
        threshold = float("inf") if j == n else 0.5 * (losses[j - 1] + losses[j])
    return {"verdict": "trustworthy" if trustworthy else "inexpressive",
            "threshold": threshold, "below_threshold": j, "included": n}


def summarize(records: list, epsilons, system: str = "") -> dict:
    """Report statistics; a pure function of the records."""
    records = sorted(records, key=lambda r: r["index"])
    included = [r for r in records if not r["excluded"]]
    report = {"system": system, "realizations": len(records), "included": len(included),
              "excluded": len(records) - len(included),
              "exclusion_reasons": dict(Counter(r["reason"] for r in records if r["excluded"])),
              "success_rate": {}, "best_epsilon": None, "best_success_rate": None,
              "cells": None, "scatter": [], "heuristic": None, "diagnostic": None}
    if not included:
        report["diagnostic"] = "all realizations were excluded"
        return report
    keys = [f"{e:g}" for e in epsilons]
    for k in keys:
        report["success_rate"][k] = float(np.mean([r["per_epsilon"][k]["success"] for r in included]))
    best = max(keys, key=lambda k: (report["success_rate"][k], -float(k)))
    report["best_epsilon"] = float(best)
    report["best_success_rate"] = report["success_rate"][best]
    wins = [r["cell_count"] for r in included if r["per_epsilon"][best]["success"]]
    report["cells"] = {"successes": len(wins),
                       "mean": float(np.mean(wins)) if wins else None,
                       "sdev": float(np.std(wins)) if wins else None,
                       "all_mean": float(np.mean([r["cell_count"] for r in included]))}
    report["scatter"] = [{"index": r["index"], "seed": r["seed"],
                          "final_test_loss": r["final_test_loss"],
                          "success": bool(r["per_epsilon"][best]["success"])} for r in included]
    if len(included) >= MIN_HEURISTIC_RUNS:
        report["heuristic"] = expressiveness_heuristic(report)
    else:
        report["diagnostic"] = f"fewer than {MIN_HEURISTIC_RUNS} included realizations"
    return report


def run_benchmark(cfg: ExperimentConfig, data: PreparedData, kind: str | None = None):
    b = cfg.benchmark
    kind = kind or b.labeler
    if kind == "integration":
        labeler = IntegrationLabeler(data.system, data.dataset.attractor_samples,
                                     cfg.sampling.horizon, cfg.sampling.escape_factor)
    elif kind == "nn":
        labeler = NearestNeighborLabeler(data.dataset)
    else:
        raise ValueError(f"unknown labeler {kind!r}")
    return min_grid_search(data.system, labeler, data.expected, b.n_max,
                           full_profile=b.full_profile)


def benchmark_report(cfg: ExperimentConfig, data: PreparedData) -> dict:
    """Grid search with the configured labeler; the other labeler is added when its minimum differs."""
    main = run_benchmark(cfg, data)
    out = main.to_dict()
    other = run_benchmark(cfg, data, "nn" if cfg.benchmark.labeler == "integration" else "integration")
    if other.min_cubes != main.min_cubes:
        out["other_labeler"] = other.to_dict()
    return out


# -- output --------------------------------------------------------------------

def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=float)


def write_scatter(path, report: dict):
    with open(path, "w") as fh:
        fh.write("index,seed,final_test_loss,success\n")
        for r in report["scatter"]:
            fh.write(f"{r['index']},{r['seed']},{r['final_test_loss']:.17g},{int(r['success'])}\n")


def write_cells(path, cfg: ExperimentConfig, data: PreparedData, records: list, report: dict):
    """Polygon data of the lowest-loss included realization at the best epsilon."""
    included = [r for r in records if not r["excluded"]]
    if not included or data.system.dim != 2:
        return False
    rec = min(included, key=lambda r: r["final_test_loss"])
    net = ConstrainedNet.from_dict(rec["net"])
    grid = enumerate_cells(extract_arrangement(net, data.system.domain), data.system.domain)
    classify_cells(net, grid, report["best_epsilon"]).to_plot_csv(path)
    return True


def run_experiment(cfg: ExperimentConfig, out_dir=None, *, benchmark: bool = False,
                   data: PreparedData | None = None) -> tuple[dict, list]:
    """All realizations of one system; returns ``(report, records)`` and writes files to ``out_dir``."""
    if cfg.realizations < 1:
        raise ValueError("realizations must be >= 1")
    data = prepare_data(cfg) if data is None else data
    records = run_records(cfg, data)
    report = summarize(records, cfg.epsilons, cfg.system)
    report["label_counts"] = data.dataset.counts().tolist()
    if benchmark:
        report["benchmark"] = benchmark_report(cfg, data)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "records.json", records)
        _write_json(out / "report.json", report)
        write_scatter(out / "scatter.csv", report)
        write_cells(out / "cells.csv", cfg, data, records, report)
    return report, records
