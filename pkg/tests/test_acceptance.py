"""End-to-end acceptance checks.

Each test evaluates one criterion at its stated tolerance and records a single
PASS/FAIL line, printed in the terminal summary. Full experiments are shared
through a module-level cache, so the suite runs each system once.
"""
import itertools
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mlcd.benchmark import IntegrationLabeler, min_grid_search
from mlcd.config import default_config
from mlcd.decomposition import enumerate_cells, extract_arrangement
from mlcd.harness import prepare_data, run_experiment
from mlcd.homology import CubicalComplex, betti
from mlcd.labeling import persistence0
from mlcd.network import ConstrainedNet, forward, loss_and_grad

from oracles import central_difference, kruskal_weights, simplicial_betti

pytestmark = pytest.mark.slow

_RUNS = {}
_DATA = {}
_BENCH = {}


def _data(system):
    if system not in _DATA:
        _DATA[system] = prepare_data(default_config(system))
    return _DATA[system]


def _run(system, realizations=100, **overrides):
    key = (system, realizations, tuple(sorted(overrides.items())))
    if key not in _RUNS:
        cfg = default_config(system)
        cfg.realizations = realizations
        for name, value in overrides.items():
            setattr(cfg, name, value)
        data = _data(system)  # overrides only touch the network side
        t0 = time.perf_counter()
        report, records = run_experiment(cfg, data=data)
        report["wall_time"] = time.perf_counter() - t0
        _RUNS[key] = (report, records)
    return _RUNS[key]


def _bench(system):
    if system not in _BENCH:
        cfg = default_config(system)
        data = _data(system)
        lab = IntegrationLabeler(data.system, data.dataset.attractor_samples,
                                 cfg.sampling.horizon, cfg.sampling.escape_factor)
        _BENCH[system] = min_grid_search(data.system, lab, data.expected, cfg.benchmark.n_max)
    return _BENCH[system]


def _record(number, ok, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])
    assert ok, detail


def _successes(records, eps):
    return [r for r in records if not r["excluded"] and r["per_epsilon"][eps]["success"]]


# -- 1: Betti-table reproduction ----------------------------------------------------------

def test_criterion_1_betti_table_reproduction():
    parts = []
    for system in ("linear_separatrix", "radial_bistable", "radial_tristable",
                   "nonlinear_separatrix"):
        report, records = _run(system)
        hits = sum(any(v["success"] for v in r["per_epsilon"].values())
                   for r in records if not r["excluded"])
        parts.append((system, hits))
    ok = all(h >= 1 for _, h in parts)
    _record(1, ok, "; ".join(f"{s} {h}/100 realizations pass" for s, h in parts))


# -- 2: cell counts ------------------------------------------------------------------------

def test_criterion_2_cell_counts():
    checks = []
    lin, _ = _run("linear_separatrix")
    c = lin["cells"]
    checks.append((f"linear MLCD cells {c['mean']:.2f} +- {c['sdev']:.2f}",
                   c["mean"] is not None and 5 <= c["mean"] <= 7 and c["sdev"] <= 2))
    _, rad_records = _run("radial_bistable")
    rad, _ = _run("radial_bistable")
    best = f"{rad['best_epsilon']:g}"
    counts = sorted({r["cell_count"] for r in _successes(rad_records, best)})
    checks.append((f"radial bistable success cell counts {counts}", counts == [25]))
    for system, want in (("linear_separatrix", 9), ("radial_bistable", 25), ("emt", 46_656)):
        got = _bench(system).min_cubes
        checks.append((f"{system} grid minimum {got} (want {want})", got == want))
    for system, d in (("ellipsoidal_2", 2), ("ellipsoidal_3", 3)):
        rep, _ = _run(system)
        mean = rep["cells"]["mean"] if rep["cells"] else None
        grid = _bench(system).min_cubes
        checks.append((f"{system} MLCD mean success cells {mean} (<= {6 ** d})",
                       mean is not None and mean <= 6 ** d))
        checks.append((f"{system} grid minimum {grid} (>= {9 ** d})",
                       grid is not None and grid >= 9 ** d))
    failed = [m for m, ok in checks if not ok]
    _record(2, not failed, "; ".join(m + ("" if ok else " [fail]") for m, ok in checks))


# -- 3: success rates ----------------------------------------------------------------------

def test_criterion_3_success_rates():
    lin, _ = _run("linear_separatrix")
    non, _ = _run("nonlinear_separatrix")
    rad, _ = _run("radial_bistable")
    e2, _ = _run("ellipsoidal_2")
    e3, _ = _run("ellipsoidal_3")
    checks = [
        (f"linear {lin['best_success_rate']:.2f} == 1", lin["best_success_rate"] == 1.0),
        (f"nonlinear {non['best_success_rate']:.2f} >= 0.9", non["best_success_rate"] >= 0.9),
        (f"radial bistable {rad['best_success_rate']:.3f} in [0.1, 0.6]",
         0.1 <= rad["best_success_rate"] <= 0.6),
        (f"ellipsoidal d=2 {e2['best_success_rate']:.3f} > d=3 {e3['best_success_rate']:.3f}",
         e2["best_success_rate"] > e3["best_success_rate"]),
    ]
    failed = [m for m, ok in checks if not ok]
    _record(3, not failed, "; ".join(m + ("" if ok else " [fail]") for m, ok in checks))


# -- 4: separation heuristic ---------------------------------------------------------------

def test_criterion_4_separation_heuristic():
    want = {"linear_separatrix": "trustworthy", "nonlinear_separatrix": "trustworthy",
            "radial_bistable": "trustworthy", "ellipsoidal_2": "trustworthy",
            "ellipsoidal_3": "trustworthy", "radial_tristable": "inexpressive",
            "hill_po": "inexpressive"}
    checks = []
    for system, verdict in want.items():
        rep, _ = _run(system, 30 if system == "hill_po" else 100)
        got = (rep["heuristic"] or {}).get("verdict", rep["diagnostic"])
        checks.append((f"{system} {got}", got == verdict))
    failed = [m for m, ok in checks if not ok]
    _record(4, not failed, "; ".join(m + ("" if ok else " [fail]") for m, ok in checks))


# -- 5: homology oracle --------------------------------------------------------------------

def test_criterion_5_homology_oracle():
    canonical = [
        (CubicalComplex(2, [[0, 0]]), [1, 0]),
        (CubicalComplex(2, [(i, j) for i in range(3) for j in range(3) if (i, j) != (1, 1)]),
         [1, 1]),
        (CubicalComplex(2, [[0, 0], [2, 0]]), [2, 0]),
        (CubicalComplex(3, [c for c in itertools.product(range(3), repeat=3) if c != (1, 1, 1)]),
         [1, 0, 1]),
    ]
    canon_ok = all(betti(cx).tolist() == want for cx, want in canonical)
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(200):
        d = int(rng.integers(1, 4))
        side = {1: 15, 2: 7, 3: 4}[d]
        n = int(rng.integers(1, 51))
        cx = CubicalComplex(d, rng.integers(0, side, size=(n, d)))
        mismatches += betti(cx).tolist() != simplicial_betti(cx.top_cells, d).tolist()
    _record(5, canon_ok and mismatches == 0,
            f"canonical cases {'ok' if canon_ok else 'wrong'}; {mismatches}/200 random mismatches")


# -- 6: persistence oracle -----------------------------------------------------------------

def test_criterion_6_persistence_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 201))
        pts = rng.normal(size=(n, int(rng.integers(1, 5)))) * rng.uniform(0.1, 10)
        worst = max(worst, float(np.max(np.abs(persistence0(pts).deaths - kruskal_weights(pts)))))
    _record(6, worst <= 1e-12, f"max |Prim - Kruskal| = {worst:.2e} over 100 sets")


# -- 7: gradient check ---------------------------------------------------------------------

def _away_from_kinks(net, X, margin):
    pre = (X @ net.directions.T)[:, :, None] + net.offsets[None]
    s = np.einsum("mdq,dq->m", np.clip(pre, 0, 1), net.out_weights)
    return (np.min(np.abs(pre)) > margin and np.min(np.abs(pre - 1)) > margin
            and np.min(np.abs(s)) > margin and np.min(np.abs(s - net.upper)) > margin)


def test_criterion_7_gradient_check():
    rng = np.random.default_rng(11)
    worst, done = 0.0, 0
    while done < 100:
        d, q, L = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 4))
        net = ConstrainedNet(np.eye(d) + 0.3 * rng.normal(size=(d, d)), rng.normal(size=(d, q)),
                             rng.normal(size=(d, q)), L)
        X = rng.normal(size=(30, d))
        y = rng.integers(0, L, size=30).astype(float)
        # a step of 1e-5 moves any pre-activation by far less than the margin
        if not _away_from_kinks(net, X, 1e-3):
            continue
        _, grads = loss_and_grad(net, X, y)
        parts = [net.directions, net.offsets, net.out_weights]
        for which, g in enumerate(grads):
            def f(v, which=which):
                p = list(parts)
                p[which] = v
                return loss_and_grad(ConstrainedNet(*p, L), X, y, need_grad=False)[0]
            fd = central_difference(f, parts[which].copy(), h=1e-5)
            scale = max(np.max(np.abs(g)), 1e-12)
            worst = max(worst, float(np.max(np.abs(fd - g)) / scale))
        done += 1
    _record(7, worst < 1e-5, f"max relative error {worst:.2e} over 100 configurations")


# -- 8: vertex extremality and affinity ----------------------------------------------------

def test_criterion_8_affinity_and_extremality():
    nets = []
    for system in ("linear_separatrix", "radial_bistable"):
        _, records = _run(system)
        nets += [(system, ConstrainedNet.from_dict(r["net"])) for r in records
                 if not r["excluded"]][:10]
    rng = np.random.default_rng(5)
    cells = affine_bad = escape_bad = 0
    worst_affine = worst_escape = 0.0
    for system, net in nets:
        dom = _data(system).system.domain
        grid = enumerate_cells(extract_arrangement(net, dom), dom)
        for i in range(len(grid)):
            C = grid.cell_corners(i)
            fv = forward(net, C)
            pairs = list(itertools.combinations(range(len(C)), 2))
            mid = forward(net, np.array([(C[a] + C[b]) / 2 for a, b in pairs]))
            err = float(np.max(np.abs(mid - np.array([(fv[a] + fv[b]) / 2 for a, b in pairs]))))
            lam = rng.uniform(0, 1, size=(1000, C.shape[1]))
            # corner 0 is the lower vertex; corner 2^(d-1-k) differs along edge k
            edges = np.array([C[1 << (C.shape[1] - 1 - k)] - C[0] for k in range(C.shape[1])])
            inner = forward(net, C[0] + lam @ edges)
            esc = float(max(inner.max() - fv.max(), fv.min() - inner.min(), 0.0))
            cells += 1
            affine_bad += err > 1e-9
            escape_bad += esc > 1e-9
            worst_affine, worst_escape = max(worst_affine, err), max(worst_escape, esc)
    _record(8, affine_bad == 0 and escape_bad == 0,
            f"{len(nets)} nets, {cells} cells: midpoint affinity broken on {affine_bad} "
            f"(max {worst_affine:.2e}); interior escapes vertex range on {escape_bad} "
            f"(max {worst_escape:.2e})")


# -- 9: EMT with one unit per direction (not gating) ---------------------------------------

def test_criterion_9_emt_stretch():
    report, records = _run("emt", 30, q=1)
    rate = report["best_success_rate"] or 0.0
    mean = report["cells"]["mean"] if report["cells"] else None
    ok = rate >= 0.8 and mean is not None and mean < 1000
    detail = (f"success {rate:.2f} (>= 0.8), mean success cells {mean} (< 1000), "
              f"{report['included']}/30 included")
    ACCEPTANCE_LINES[9] = f"criterion 9: {'PASS' if ok else 'FAIL (not gating)'}  {detail}"
    print(ACCEPTANCE_LINES[9])
    if not ok:
        pytest.xfail(detail)
