import math

import numpy as np
import pytest

from paritylab.baselines import (
    AdaDelta,
    DecoupledNet,
    LinearModel,
    OptimizerState,
    ReluNet,
    Sgd,
    adadelta_step,
    accuracy_of,
    decouple,
    fit_hinge,
    make_optimizer,
    train_linear_hinge,
)
from paritylab.errors import InvalidInputError, NumericError
from paritylab.features import FeatureMap, make_feature_map
from paritylab.net import forward, init_symmetric
from paritylab.parity import ParityTask, sample_batch


def _hand_adadelta(g_seq, rho=0.95, eps=1e-6):
    # written out with plain floats
    x, Eg, Ed = 0.0, 0.0, 0.0
    for g in g_seq:
        Eg = rho * Eg + (1 - rho) * g * g
        d = math.sqrt(Ed + eps) / math.sqrt(Eg + eps) * g
        Ed = rho * Ed + (1 - rho) * d * d
        x -= d
    return x


def test_adadelta_three_step_hand_example():
    p = {"x": np.zeros(1)}
    st = OptimizerState()
    for _ in range(3):
        adadelta_step(st, p, {"x": np.ones(1)})
    # step 1: Eg = .05, d1 = sqrt(1e-6)/sqrt(.050001) = 0.00447209...
    d1 = math.sqrt(1e-6) / math.sqrt(0.05 + 1e-6)
    assert abs(_hand_adadelta([1.0]) + d1) < 1e-15
    assert abs(p["x"][0] - _hand_adadelta([1.0, 1.0, 1.0])) <= 1e-12
    assert st.steps == 3


def test_adadelta_zero_gradient_decays_state():
    p = {"x": np.array([2.0])}
    st = OptimizerState()
    adadelta_step(st, p, {"x": np.array([1.0])})
    before = p["x"].copy()
    eg = st.sq_grad["x"].copy()
    adadelta_step(st, p, {"x": np.zeros(1)})
    assert np.array_equal(p["x"], before)
    assert st.sq_grad["x"][0] == pytest.approx(0.95 * eg[0])


def test_adadelta_scale_invariance():
    # the update depends on g only through g / sqrt(E[g^2] + eps), so once g^2 >> eps the scale drops out
    steps = []
    for scale in (1.0, 1e2):
        p = {"x": np.zeros(1)}
        st = OptimizerState()
        for _ in range(3000):
            prev = p["x"][0]
            adadelta_step(st, p, {"x": np.full(1, scale)})
        steps.append(prev - p["x"][0])
    assert steps[0] == pytest.approx(steps[1], rel=1e-4)


def test_adadelta_shape_check():
    with pytest.raises(InvalidInputError):
        adadelta_step(OptimizerState(), {"x": np.zeros(2)}, {"x": np.zeros(3)})


def test_make_optimizer():
    assert isinstance(make_optimizer("sgd", lr=0.5), Sgd)
    assert isinstance(make_optimizer("adadelta", rho=0.9), AdaDelta)
    with pytest.raises(InvalidInputError):
        make_optimizer("adam")


def test_decoupled_matches_snapshot_at_init():
    net0 = init_symmetric(6, 8, 3, rng=1)
    d = decouple(net0)
    X = np.random.default_rng(0).choice([-1.0, 1.0], size=(50, 8)) / math.sqrt(8)
    np.testing.assert_allclose(d.predict(X), forward(net0, X), atol=1e-12)
    r = ReluNet(8, 16, rng=2, dtype=np.float64)
    np.testing.assert_allclose(decouple(r).predict(X), r.predict(X), atol=1e-12)
    np.testing.assert_allclose(decouple(r, form="gated").predict(X), r.predict(X), atol=1e-12)


def test_decoupled_linear_in_parameters():
    r = ReluNet(8, 16, rng=3, dtype=np.float64)
    d = decouple(r)
    g = np.random.default_rng(4)
    X = g.normal(size=(30, 8))
    th1 = {k: v + g.normal(size=v.shape) for k, v in d.params.items()}
    th2 = {k: v + g.normal(size=v.shape) for k, v in d.params.items()}

    def at(th):
        d.params = {k: v.copy() for k, v in th.items()}
        return d.predict(X)

    mid = at({k: (th1[k] + th2[k]) / 2 for k in th1})
    np.testing.assert_allclose(mid, (at(th1) + at(th2)) / 2, atol=1e-10)


def test_decoupled_gates_frozen_through_training():
    task = ParityTask.leading(10, 3)
    X, y = sample_batch(task, 0, 512)
    d = decouple(ReluNet(10, 32, rng=5, dtype=np.float64))
    g0 = d.gates(X)
    fit_hinge(d, X, y, 100, batch=64, optimizer=Sgd(0.05), rng=1)
    assert np.array_equal(g0, d.gates(X))


def test_gradients_match_fd():
    g = np.random.default_rng(6)
    X, y = g.normal(size=(40, 5)), g.choice([-1.0, 1.0], size=40)
    models = [ReluNet(5, 7, rng=1, dtype=np.float64), decouple(ReluNet(5, 7, rng=2, dtype=np.float64), form="gated"),
              decouple(ReluNet(5, 7, rng=3, dtype=np.float64)), LinearModel(make_feature_map("relu-random", 5, 9, rng=4))]
    for m in models:
        m.params = {k: v + 0.3 * g.normal(size=v.shape) for k, v in m.params.items()}
        _, grads = m.loss_grad(X, y)
        h = 1e-6
        for key, arr in m.params.items():
            idx = (0,) * arr.ndim
            old = arr[idx]
            arr[idx] = old + h
            lp = m.loss_grad(X, y)[0]
            arr[idx] = old - h
            lm = m.loss_grad(X, y)[0]
            arr[idx] = old
            assert abs((lp - lm) / (2 * h) - grads[key][idx]) < 1e-6, (type(m).__name__, key)


def test_linear_separable_toy_reaches_full_accuracy():
    X = np.array([[2.0, 1.0], [1.0, 2.0], [-1.0, -2.0], [-2.0, -1.0], [1.5, 0.5], [-0.5, -1.5]])
    y = np.array([1.0, 1, -1, -1, 1, -1])
    fm = FeatureMap("explicit-table", 1, 1, {"table": np.zeros((2, 1))})
    model = LinearModel(fm)
    ident = lambda Z: np.asarray(Z, dtype=np.float64)
    model.features = ident
    model.params["w"] = np.zeros(2)
    model, curve = train_linear_hinge(model, (X, y), 50, AdaDelta(), batch=2, rng=0, eval_data=(X, y))
    assert curve[-1][1] == 1.0


def test_norm_budget_projection():
    task = ParityTask.leading(12, 3)
    m = LinearModel(make_feature_map("relu-random", 12, 64, rng=0), norm_budget=0.5)
    m, _ = train_linear_hinge(m, task, 30, Sgd(1.0), batch=256, rng=0)
    assert np.linalg.norm(m.params["w"]) <= 0.5 + 1e-12


def test_linear_baseline_stays_near_ceiling():
    task = ParityTask.leading(50, 3)
    ev = sample_batch(task, 1, 4000)
    m = LinearModel(make_feature_map("relu-random", 50, 512, rng=2))
    m, curve = train_linear_hinge(m, task, 60, AdaDelta(), batch=2048, rng=3, eval_data=ev)
    assert max(c[1] for c in curve) <= 0.85


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fit_hinge_detects_divergence():
    X = np.ones((4, 2))
    y = np.ones(4)
    m = ReluNet(2, 3, rng=0, dtype=np.float64)
    m.params["W"][:] = np.inf
    with pytest.raises(NumericError):
        fit_hinge(m, X, y, 1, batch=4, optimizer=Sgd(0.1))


def test_accuracy_of_zero_is_error():
    m = LinearModel(make_feature_map("relu-random", 3, 4, rng=0))
    assert accuracy_of(m, np.zeros((5, 3)), np.ones(5)) == 0.0
