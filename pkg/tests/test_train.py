import math

import numpy as np
import pytest

from paritylab.errors import InvalidInputError, NumericError, ScheduleError
from paritylab.net import GradientBundle, TwoLayerNet, init_symmetric
from paritylab.parity import EXACT, ParityTask, enumerate_support
from paritylab.train import (
    Schedule,
    accuracy,
    apply_step,
    drift,
    gd_step,
    hinge_sequence,
    ogd_regret_check,
    quadratic_sequence,
    replay_second_layer,
    standard_schedule,
    train,
)


def test_schedule_examples():
    s = standard_schedule(100, 3, 400, 50, 0.0)
    assert s.eta[0] == 1.0 and s.lam[0] == 0.5
    assert np.all(s.eta[1:] == 9 / 2000) and np.all(s.lam[1:] == 0.0)
    assert standard_schedule(10, 3, 4, 50, 3 / 50).lam[-1] == 3 / 50
    with pytest.raises(ScheduleError):
        standard_schedule(10, 3, 4, 50, 3 / 50 + 1e-12)
    with pytest.raises(ScheduleError):
        standard_schedule(10, 3, 4, 50, -0.1)
    with pytest.raises(ScheduleError):
        Schedule(3, [1, 1], [0, 0, 0])


def test_zero_gradient_leaves_net_unchanged():
    net = init_symmetric(4, 6, 3, rng=1)
    z = GradientBundle(np.zeros_like(net.W), np.zeros_like(net.b), np.zeros_like(net.u), 0.0, "zero")
    out = apply_step(net, z, 0.7, 0.0)
    assert np.array_equal(out.W, net.W) and np.array_equal(out.b, net.b) and np.array_equal(out.u, net.u)


def test_bias_not_regularized():
    net = TwoLayerNet(np.ones((2, 3)), np.array([1.0, 2.0]), np.ones(2))
    z = GradientBundle(np.zeros((2, 3)), np.zeros(2), np.zeros(2), 0.0, "zero")
    out = apply_step(net, z, 0.1, 1.0)
    assert np.array_equal(out.b, net.b)
    np.testing.assert_allclose(out.W, 0.8 * net.W)


def test_first_step_second_layer_bound(task12):
    net0 = init_symmetric(40, 12, 3, rng=2)
    net1, _ = gd_step(net0, task12, 1.0, 0.5)
    assert np.max(np.abs(net1.u)) <= 3 / math.sqrt(12) + 1e-12
    # with lambda = 1/2 and eta = 1 the init value is removed exactly
    sup = enumerate_support(task12)
    act = np.clip(sup.X @ net0.W.T + net0.b, 0, 6)
    np.testing.assert_allclose(net1.u, (sup.weights * sup.labels) @ act, atol=1e-15)


def test_single_neuron_hand_update():
    task = ParityTask.leading(6, 3)
    W = np.array([[1.0, -1, 0, 1, 0, 0], [1.0, -1, 0, 1, 0, 0]])
    net = TwoLayerNet(W, np.array([0.3, 0.3]), np.array([0.4, -0.4]))
    eta, lam = 0.2, 0.05
    out, _ = gd_step(net, task, eta, lam)
    sup = enumerate_support(task)
    e = float(np.dot(sup.weights * sup.labels, np.clip(sup.X @ W[0] + 0.3, 0, 6)))
    assert out.u[0] == pytest.approx(0.4 - eta * (-e + 2 * lam * 0.4), abs=1e-15)


def test_train_zero_steps(task12):
    net0 = init_symmetric(3, 12, 3)
    trace, best = train(net0, task12, standard_schedule(0, 3, 3, 12), EXACT)
    assert len(trace) == 1 and best is net0 and trace.best_step == 0
    assert trace.records[0]["accuracy"] == 0.0 and trace.records[0]["loss"] == 1.0


def test_train_drift_matches_snapshots():
    task = ParityTask.leading(10, 3)
    net0 = init_symmetric(16, 10, 3, rng=3)
    trace, best = train(net0, task, standard_schedule(6, 3, 16, 10), EXACT, keep_snapshots=True)
    assert len(trace.snapshots) == 7
    for t in range(1, 7):
        wd, bd = drift(trace.snapshots[t], trace.snapshots[1])
        assert abs(wd - trace.records[t]["w_drift"]) <= 1e-12
        assert abs(bd - trace.records[t]["b_drift"]) <= 1e-12
    assert trace.records[0]["w_drift"] is None
    losses = trace.column("loss")
    assert trace.best_step == int(np.argmin(losses))
    assert best is trace.snapshots[trace.best_step]
    assert "w_drift" in trace.to_csv().splitlines()[0]


def test_train_monte_carlo_is_deterministic():
    task = ParityTask.leading(20, 3)
    net0 = init_symmetric(16, 20, 3, rng=4)
    s = standard_schedule(5, 3, 16, 20)
    a, _ = train(net0, task, s, 512, seed=9, eval_samples=1000)
    b, _ = train(net0, task, s, 512, seed=9, eval_samples=1000)
    c, _ = train(net0, task, s, 512, seed=10, eval_samples=1000)
    assert a.to_csv() == b.to_csv() != c.to_csv()


def test_train_rejects_unknown_mode(task12):
    with pytest.raises(InvalidInputError):
        train(init_symmetric(2, 12, 3), task12, standard_schedule(1, 3, 2, 12), "approx")


def test_accuracy_predictor_examples(task12):
    f = lambda X: np.prod(np.sign(X[:, :3]), axis=1) * 0.25
    assert accuracy(f, task12) == 1.0
    assert accuracy(lambda X: np.zeros(len(X)), task12) == 0.0
    assert accuracy(lambda X: math.sqrt(12) * X[:, 2], task12) == 0.75


def test_ogd_trivial_and_quadratic():
    zero = [lambda th: (0.0, np.zeros_like(th))]
    r = ogd_regret_check(zero, 0.1, np.zeros(2), np.zeros(2))
    assert r.lhs == 0.0 and r.rhs == 0.0 and r.holds
    g = np.random.default_rng(0)
    r = ogd_regret_check(quadratic_sequence(g.normal(size=(100, 3))), 0.05, np.zeros(3), np.zeros(3))
    assert r.holds


def test_ogd_quadratic_matches_hand_iteration():
    # one step from theta1 = 1 on f = theta^2 with eta = 0.25
    r = ogd_regret_check(quadratic_sequence([[0.0], [0.0]]), 0.25, np.array([1.0]), np.array([0.0]))
    # theta2 = 1 - 0.25*2 = 0.5; values 1 and 0.25; gradients 2 and 1
    assert r.lhs == pytest.approx(0.625)
    assert r.gradient_term == pytest.approx(0.25 * (4 + 1) / 2)
    assert r.init_term == pytest.approx(1.5)


def test_ogd_hinge_replay():
    task = ParityTask.leading(20, 3)
    net = init_symmetric(32, 20, 3, rng=1)
    oracles = replay_second_layer(net, task, samples=1024, batch_size=64, seed=2)
    assert len(oracles) == 16
    assert ogd_regret_check(oracles, 0.05, np.zeros(64), np.full(64, 0.2)).holds


def test_hinge_sequence_gradient_fd():
    g = np.random.default_rng(3)
    Phi, y = g.normal(size=(50, 4)), g.choice([-1.0, 1.0], size=50)
    f = hinge_sequence(Phi, y, 50)[0]
    th = g.normal(size=4)
    v, gr = f(th)
    h = 1e-7
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        assert abs((f(th + e)[0] - f(th - e)[0]) / (2 * h) - gr[j]) < 1e-6


def test_ogd_errors():
    with pytest.raises(InvalidInputError):
        ogd_regret_check([], 0.1, np.zeros(1), np.zeros(1))
    with pytest.raises(InvalidInputError):
        ogd_regret_check(quadratic_sequence([[0.0]]), 0.0, np.zeros(1), np.zeros(1))
    bad = [lambda th: (float("nan"), np.zeros(1))]
    with pytest.raises(NumericError):
        ogd_regret_check(bad, 0.1, np.zeros(1), np.zeros(1))
