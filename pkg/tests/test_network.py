import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlcd.dynamics import HyperRectangle, get_system, iterate_time1, latin_hypercube
from mlcd.labeling import LabeledDataset, label_orbits
from mlcd.network import (ConstrainedNet, TrainConfig, check_convergence, check_span, forward,
                          hardtanh, init_constrained, loss_and_grad, per_direction_terms,
                          split, train)

from oracles import central_difference


def test_hardtanh_examples():
    assert hardtanh(0, 1, np.array([-2.0, 0.3, 7.0])).tolist() == [0.0, 0.3, 1.0]
    assert hardtanh(2, 2, 5.0) == 2.0
    with pytest.raises(ValueError):
        hardtanh(1, 0, 0.5)


def test_forward_single_unit():
    net = ConstrainedNet(np.eye(1), [[0.0]], [[1.0]], 2)
    assert forward(net, [0.5]) == pytest.approx(0.5)
    assert forward(net, [2.0]) == 1.0
    assert forward(net, [-1.0]) == 0.0


def test_forward_clamps_to_label_range():
    net = ConstrainedNet(np.eye(2), [[0.0], [0.0]], [[3.0], [3.0]], 3)
    assert forward(net, [1.0, 1.0]) == 2.0
    out = forward(net, np.array([[1.0, 1.0], [0.1, 0.0]]))
    assert out.shape == (2,) and out[1] == pytest.approx(0.3)


def test_output_is_clamped_sum_of_pieces():
    net = init_constrained(HyperRectangle([-2, -1, 0], [2, 3, 1]), 3, 4, 0)
    X = np.random.default_rng(1).uniform(-2, 3, size=(50, 3))
    pieces = per_direction_terms(net, X)
    assert np.allclose(forward(net, X), np.clip(pieces.sum(axis=1), 0, 3))


def test_init_shapes_and_kinks():
    dom = HyperRectangle([-5, 0], [5, 1])
    net = init_constrained(dom, 4, 3, 7)
    assert net.p == 8 and net.weight_matrix().shape == (8, 2)
    assert np.array_equal(net.directions, np.eye(2))
    # the zero-level kink of every unit (u . x = -b) lies in the domain's extent
    kinks = -net.offsets
    assert np.all((kinks >= dom.lower[:, None]) & (kinks <= dom.upper[:, None]))
    assert np.array_equal(net.weight_matrix()[:4], np.tile([1.0, 0.0], (4, 1)))
    with pytest.raises(ValueError):
        init_constrained(dom, 0, 2, 0)


def test_net_json_roundtrip(tmp_path):
    net = init_constrained(HyperRectangle([0, 0, 0], [1, 1, 1]), 2, 2, 3)
    net.save(tmp_path / "n.json")
    back = ConstrainedNet.load(tmp_path / "n.json")
    assert np.array_equal(back.offsets, net.offsets) and back.num_labels == 2


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(1, 3), q=st.integers(1, 3))
def test_gradient_matches_finite_differences(seed, d, q):
    rng = np.random.default_rng(seed)
    net = ConstrainedNet(np.eye(d) + 0.2 * rng.normal(size=(d, d)), rng.normal(size=(d, q)),
                         rng.normal(size=(d, q)), 3)
    X = rng.normal(size=(40, d))
    y = rng.integers(0, 3, size=40).astype(float)
    _, grads = loss_and_grad(net, X, y)

    def at(which, value):
        parts = [net.directions, net.offsets, net.out_weights]
        parts[which] = value
        return loss_and_grad(ConstrainedNet(*parts, 3), X, y, need_grad=False)[0]

    for which, g in enumerate(grads):
        base = [net.directions, net.offsets, net.out_weights][which]
        fd = central_difference(lambda v: at(which, v), base.copy(), h=1e-7)
        # kinks of the piecewise-linear loss can sit inside the difference stencil
        close = np.isclose(fd, g, rtol=1e-4, atol=1e-5)
        assert close.mean() >= 0.9


def test_check_convergence_examples():
    assert check_convergence([1.0, 0.5], 0.1)
    assert check_convergence([1.0, 0.9], 0.1)
    assert not check_convergence([1.0, 0.95], 0.1)
    assert not check_convergence([1.0], 0.1)


def test_check_span_examples():
    assert check_span(ConstrainedNet(np.eye(2), np.zeros((2, 1)), np.zeros((2, 1)), 2))
    parallel = np.array([[1.0, 1.0], [2.0, 2.0]])
    assert not check_span(ConstrainedNet(parallel, np.zeros((2, 1)), np.zeros((2, 1)), 2))
    a = 1e-12
    nearly = np.array([[1.0, 0.0], [np.cos(a), np.sin(a)]])
    assert not check_span(ConstrainedNet(nearly, np.zeros((2, 1)), np.zeros((2, 1)), 2))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batchsize=0)
    with pytest.raises(ValueError):
        TrainConfig(convergence_ratio=1.0)
    with pytest.raises(ValueError):
        TrainConfig(test_fraction=0.0)


def _toy_dataset(n=400, seed=0):
    X = np.random.default_rng(seed).uniform(-1, 1, size=(n, 2))
    return LabeledDataset(X, (X[:, 0] > 0.2).astype(int), 2)


def test_training_preserves_constraint_and_is_deterministic():
    data = _toy_dataset()
    tr, te = split(data, 0.5, 0)
    net0 = init_constrained(HyperRectangle([-1, -1], [1, 1]), 2, 2, 0)
    cfg = TrainConfig(batchsize=50, max_epochs=30, patience=5, seed=4)
    a, b = train(net0, tr, te, cfg), train(net0, tr, te, cfg)
    assert a.train_losses == b.train_losses
    W = a.net.weight_matrix()
    assert np.array_equal(W[0], W[1]) and np.array_equal(W[2], W[3])
    # the input net is left untouched
    assert np.array_equal(net0.directions, np.eye(2))


def test_trained_net_is_sum_of_ridge_functions():
    data = _toy_dataset()
    tr, te = split(data, 0.5, 1)
    res = train(init_constrained(HyperRectangle([-1, -1], [1, 1]), 2, 2, 1), tr, te,
                TrainConfig(batchsize=50, max_epochs=40, patience=5))
    net = res.net
    # moving orthogonally to u_1 leaves the first piece unchanged
    x = np.array([0.3, -0.4])
    u = net.directions[0]
    perp = np.array([-u[1], u[0]])
    assert per_direction_terms(net, x + 0.3 * perp)[0, 0] == pytest.approx(
        per_direction_terms(net, x)[0, 0])


def test_all_zero_labels_are_learned():
    X = np.random.default_rng(0).uniform(-1, 1, size=(400, 2))
    data = LabeledDataset(X, np.zeros(400, dtype=int), 1)
    tr, te = split(data, 0.5, 0)
    res = train(init_constrained(HyperRectangle([-1, -1], [1, 1]), 1, 1, 0), tr, te,
                TrainConfig(batchsize=50, max_epochs=20))
    assert res.final_test_loss < 1e-4


def test_split_is_disjoint_and_seeded():
    data = _toy_dataset(10)
    tr, te = split(data, 0.5, 3)
    assert tr.labels.size == te.labels.size == 5
    assert not set(map(tuple, tr.points)) & set(map(tuple, te.points))
    tr2, _ = split(data, 0.5, 3)
    assert np.array_equal(tr.points, tr2.points)


@pytest.mark.slow
def test_linear_separatrix_training_loss():
    sys = get_system("linear_separatrix")
    ens = iterate_time1(sys, latin_hypercube(sys.domain, 4000, 0), 20, escape_factor=50.0)
    data, _ = label_orbits(ens, 2)
    losses = []
    for seed in range(5):
        tr, te = split(data, 0.5, seed)
        res = train(init_constrained(sys.domain, 1, 2, seed), tr, te,
                    TrainConfig(batchsize=200, max_epochs=100, seed=seed))
        losses.append(res.final_test_loss)
    assert np.sum(np.array(losses) < 1e-2) >= 3
