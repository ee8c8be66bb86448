"""Gradient descent on the regularized population loss, traces and the OGD check."""
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericError, ScheduleError
from .net import TwoLayerNet, evaluate, population_gradient
from .parity import DEFAULT_CAP, EXACT, Empirical, MonteCarlo, ParityTask, sample_batch
from .rng import stream


@dataclass(frozen=True, eq=False)
class Schedule:
    T: int
    eta: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=np.float64)
        lam = np.asarray(self.lam, dtype=np.float64)
        if eta.shape != (self.T,) or lam.shape != (self.T,):
            raise ScheduleError(f"schedule vectors must have length T={self.T}")
        if np.any(eta < 0) or np.any(lam < 0):
            raise ScheduleError("step sizes and regularization weights must be non-negative")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "lam", lam)


def standard_schedule(T, k, q, n, lambda_tail=0.0):
    """``eta_1 = 1, lambda_1 = 1/2``; afterwards ``eta = k^2/(T sqrt(q))`` and ``lambda_tail``."""
    if T < 0:
        raise ScheduleError(f"T must be non-negative, got {T}")
    if lambda_tail < 0 or lambda_tail > k / n:
        raise ScheduleError(f"lambda_tail={lambda_tail} outside [0, k/n={k / n}]")
    eta = np.full(T, k**2 / (T * math.sqrt(q)) if T else 0.0)
    lam = np.full(T, float(lambda_tail))
    if T:
        eta[0], lam[0] = 1.0, 0.5
    return Schedule(T, eta, lam)


def gd_step(net: TwoLayerNet, task: ParityTask, eta, lam, mode=EXACT, gate="relu6", cap=DEFAULT_CAP):
    g = population_gradient(net, task, mode, gate=gate, cap=cap)
    return apply_step(net, g, eta, lam), g


def apply_step(net, g, eta, lam):
    # biases carry no regularizer term
    return TwoLayerNet(
        net.W - eta * (g.dW + 2.0 * lam * net.W),
        net.b - eta * g.db,
        net.u - eta * (g.du + 2.0 * lam * net.u),
    )


# --------------------------------------------------------------------------- trace

TRACE_COLUMNS = ("step", "loss", "accuracy", "u_norm", "w_drift", "b_drift")


@dataclass
class TrainTrace:
    records: list = field(default_factory=list)
    best_step: int = 0
    snapshots: list = None

    def add(self, **rec):
        self.records.append(rec)

    def column(self, name):
        return [r[name] for r in self.records]

    def __len__(self):
        return len(self.records)

    def best(self):
        return self.records[self.best_step]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow(["" if r[c] is None else (r[c] if c == "step" else repr(float(r[c]))) for c in TRACE_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary(self):
        b = self.best()
        return {
            "steps": len(self.records) - 1,
            "best_step": self.best_step,
            "best_loss": b["loss"],
            "best_accuracy": b["accuracy"],
            "final_loss": self.records[-1]["loss"],
            "final_accuracy": self.records[-1]["accuracy"],
            "max_accuracy": max(r["accuracy"] for r in self.records),
        }

    def to_json(self, path=None):
        text = json.dumps({"summary": self.summary(), "records": self.records}, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def drift(net, net1):
    """``(max_i ||w_i - w_i^(1)||, max_i |b_i - b_i^(1)|)``."""
    return (
        float(np.max(np.linalg.norm(net.W - net1.W, axis=1))),
        float(np.max(np.abs(net.b - net1.b))),
    )


def train(
    net0: TwoLayerNet,
    task: ParityTask,
    schedule: Schedule,
    mode=EXACT,
    seed=0,
    eval_samples=20000,
    keep_snapshots=False,
    gate="relu6",
    cap=DEFAULT_CAP,
    callback=None,
):
    """Run ``schedule.T`` steps of full-batch GD and pick the best iterate.

    ``mode`` is ``"exact"`` or a sample count ``M`` (or a ``MonteCarlo``);
    with Monte-Carlo gradients step ``t`` draws its batch from stream
    ``(seed, "grad", t)`` and the loss/accuracy used for selection come from
    one fixed evaluation sample on ``(seed, "eval")``.
    """
    if isinstance(mode, (int, np.integer)) and not isinstance(mode, bool):
        mode = MonteCarlo(int(mode), (seed, "grad"))
    if mode == EXACT:
        eval_mode = EXACT
        grad_mode = lambda t: EXACT
    elif isinstance(mode, MonteCarlo):
        Xe, ye = sample_batch(task, stream(seed, "eval"), eval_samples)
        eval_mode = Empirical(Xe, ye)
        M = int(mode.samples)
        grad_mode = lambda t: MonteCarlo(M, (seed, "grad", t))
    else:
        raise InvalidInputError(f"unsupported training mode {mode!r}")

    trace = TrainTrace(snapshots=[net0] if keep_snapshots else None)
    loss, acc = evaluate(net0, task, eval_mode, cap)
    trace.add(step=0, loss=loss, accuracy=acc, u_norm=float(np.linalg.norm(net0.u)), w_drift=None, b_drift=None)
    best_net, best_loss = net0, loss
    net, net1 = net0, None
    for t in range(1, schedule.T + 1):
        net, _ = gd_step(net, task, schedule.eta[t - 1], schedule.lam[t - 1], grad_mode(t), gate, cap)
        if net1 is None:
            net1 = net
        loss, acc = evaluate(net, task, eval_mode, cap)
        if not math.isfinite(loss):
            raise NumericError(f"loss became non-finite at step {t}")
        wd, bd = drift(net, net1)
        trace.add(step=t, loss=loss, accuracy=acc, u_norm=float(np.linalg.norm(net.u)), w_drift=wd, b_drift=bd)
        if keep_snapshots:
            trace.snapshots.append(net)
        if loss < best_loss:
            best_net, best_loss, trace.best_step = net, loss, t
        if callback is not None:
            callback(t, trace.records[-1])
    return trace, best_net


def accuracy(predictor, task: ParityTask, mode=EXACT, cap=DEFAULT_CAP):
    """``P(sign(predictor(x)) == f_A(x))``; a zero prediction is an error."""
    return evaluate(predictor, task, mode, cap)[1]


# --------------------------------------------------------------------------- online gradient descent


@dataclass(frozen=True)
class RegretReport:
    lhs: float
    rhs: float
    comparator_loss: float
    distance_term: float
    init_term: float
    gradient_term: float
    holds: bool

    def to_dict(self):
        return dict(self.__dict__)


def _finite(v, what):
    if not np.all(np.isfinite(v)):
        raise NumericError(f"non-finite {what}")
    return v


def ogd_regret_check(oracles, eta, theta1, theta_star) -> RegretReport:
    """Run OGD over ``oracles`` and test the averaged regret inequality.

    Each oracle maps ``theta`` to ``(value, gradient)``.  The bound is

        mean f_t(theta_t) <= mean f_t(theta*) + ||theta*||^2/(2 eta T)
                             + ||theta_1|| mean ||g_t|| + eta mean ||g_t||^2
    """
    if eta <= 0:
        raise InvalidInputError("eta must be positive")
    T = len(oracles)
    if T == 0:
        raise InvalidInputError("need at least one oracle")
    theta = _finite(np.array(theta1, dtype=np.float64), "theta1")
    theta_star = _finite(np.asarray(theta_star, dtype=np.float64), "comparator")
    vals = np.empty(T)
    comp = np.empty(T)
    gnorm = np.empty(T)
    for t, f in enumerate(oracles):
        v, g = f(theta)
        g = _finite(np.asarray(g, dtype=np.float64), f"gradient at step {t}")
        vals[t] = _finite(float(v), f"value at step {t}")
        comp[t] = _finite(float(f(theta_star)[0]), f"comparator value at step {t}")
        gnorm[t] = np.linalg.norm(g)
        theta = _finite(theta - eta * g, f"iterate at step {t}")
    lhs = float(vals.mean())
    comparator = float(comp.mean())
    dist = float(theta_star @ theta_star) / (2.0 * eta * T)
    init = float(np.linalg.norm(theta1)) * float(gnorm.mean())
    grad = eta * float(np.mean(gnorm**2))
    rhs = comparator + dist + init + grad
    return RegretReport(lhs, rhs, comparator, dist, init, grad, bool(lhs <= rhs + 1e-12 * max(1.0, abs(rhs))))


def quadratic_sequence(centers, scales=None):
    """Oracles ``f_t(theta) = a_t ||theta - c_t||^2``."""
    centers = np.asarray(centers, dtype=np.float64)
    scales = np.ones(len(centers)) if scales is None else np.asarray(scales, dtype=np.float64)

    def make(c, a):
        def f(theta):
            d = theta - c
            return a * float(d @ d), 2.0 * a * d

        return f

    return [make(c, a) for c, a in zip(centers, scales)]


def hinge_sequence(features, y, batch_size, rng=0):
    """Mean-hinge oracles on consecutive minibatches of a fixed feature matrix.

    This is the second-layer problem once the first layer is frozen.
    """
    features = np.asarray(features, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gen = rng if isinstance(rng, np.random.Generator) else stream(rng, "hinge-order")
    order = gen.permutation(len(y))

    def make(Phi, yy):
        def f(theta):
            m = 1.0 - yy * (Phi @ theta)
            act = m > 0
            return float(np.mean(np.where(act, m, 0.0))), -(Phi[act].T @ yy[act]) / len(yy)

        return f

    return [make(features[order[s : s + batch_size]], y[order[s : s + batch_size]]) for s in range(0, len(y), batch_size)]


def replay_second_layer(net: TwoLayerNet, task: ParityTask, samples=4096, batch_size=256, seed=0):
    """Hinge oracles over ReLU6 features of a frozen first layer, drawn from ``task``."""
    X, y = sample_batch(task, stream(seed, "replay"), samples)
    Phi = np.clip(X @ net.W.T + net.b, 0.0, 6.0)
    return hinge_sequence(Phi, y, batch_size, rng=stream(seed, "replay-order"))
