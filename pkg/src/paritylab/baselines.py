"""Models trained by minibatch hinge minimization: linear heads on fixed
features, the frozen-gate (NTK regime) network, and the plain ReLU network of
the MNIST experiment.  Also the optimizers (SGD and AdaDelta).

Every model exposes ``params`` (a dict of arrays), ``predict(X)`` and
``loss_grad(X, y)`` returning the mean hinge loss and a gradient dict with
the same keys.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericError
from .features import FeatureMap
from .parity import ParityTask, sample_batch
from .rng import as_generator, stream


def _hinge_coef(y, yhat):
    """Mean hinge loss and ``d loss / d yhat`` per row (already divided by the batch)."""
    margin = 1.0 - y * yhat
    active = margin > 0
    loss = float(np.mean(np.maximum(margin, 0.0)))  # NaN propagates, so divergence is caught
    return loss, np.where(active, -y, 0.0).astype(yhat.dtype) / len(y)


# --------------------------------------------------------------------------- models


class LinearModel:
    """``<Psi(x), w> + c`` with an optional projection onto ``||w|| <= norm_budget``."""

    def __init__(self, fmap: FeatureMap, weights=None, norm_budget=None, intercept=True, dtype=np.float64):
        self.map = fmap
        self.dtype = dtype
        self.params = {"w": np.zeros(fmap.N, dtype=dtype) if weights is None else np.asarray(weights, dtype=dtype)}
        if intercept:
            self.params["c"] = np.zeros(1, dtype=dtype)
        self.norm_budget = norm_budget

    def features(self, X):
        return self.map.embed(X).astype(self.dtype, copy=False)

    def predict(self, X, features=None):
        Phi = self.features(X) if features is None else features
        out = Phi @ self.params["w"]
        if "c" in self.params:
            out = out + self.params["c"][0]
        return out

    def loss_grad(self, X, y, features=None):
        Phi = self.features(X) if features is None else features
        loss, g = _hinge_coef(y, self.predict(None, Phi))
        grads = {"w": Phi.T @ g}
        if "c" in self.params:
            grads["c"] = np.array([g.sum()], dtype=self.dtype)
        return loss, grads

    def project(self):
        if self.norm_budget is None:
            return
        w = self.params["w"]
        nrm = float(np.linalg.norm(w))
        if nrm > self.norm_budget:
            w *= self.norm_budget / nrm


class ReluNet:
    """One hidden ReLU layer (uncapped) with an output bias.

    Init: ``W ~ Normal(0, 1/d)``, ``u ~ Normal(0, 1/m)``, zero biases.
    """

    def __init__(self, d, m, rng=0, dtype=np.float32):
        gen = as_generator(rng)
        self.dtype = dtype
        self.params = {
            "W": gen.normal(0.0, 1.0 / math.sqrt(d), size=(m, d)).astype(dtype),
            "b": np.zeros(m, dtype=dtype),
            "u": gen.normal(0.0, 1.0 / math.sqrt(m), size=m).astype(dtype),
            "c": np.zeros(1, dtype=dtype),
        }

    def hidden(self, X):
        p = self.params
        return np.maximum(X @ p["W"].T + p["b"], 0)

    def predict(self, X):
        return self.hidden(X) @ self.params["u"] + self.params["c"][0]

    def loss_grad(self, X, y):
        p = self.params
        pre = X @ p["W"].T + p["b"]
        h = np.maximum(pre, 0)
        loss, g = _hinge_coef(y, h @ p["u"] + p["c"][0])
        back = (g[:, None] * (pre > 0)) * p["u"]
        return loss, {"W": back.T @ X, "b": back.sum(axis=0), "u": h.T @ g, "c": np.array([g.sum()], dtype=self.dtype)}


DECOUPLED_FORMS = ("linearized", "gated")


class DecoupledNet:
    """Two-layer network whose gates are frozen at an init snapshot.

    ``gate_i(x) = 1`` iff the *init* pre-activation lies in the activation's
    linear region.  Two forms:

    * ``"linearized"``: first-order expansion around the snapshot,
      ``sum_i u0_i gate_i (<w_i - w0_i, x> + b_i - b0_i) + sum_i u_i sigma(pre0_i)``.
      Exactly linear in ``(W, b, u)`` and equal to the snapshot network at init.
    * ``"gated"``: ``sum_i u_i (<w_i, x> + b_i) gate_i``, linear in ``x`` for
      fixed gates but bilinear in ``(W, u)``.

    ``cap`` is 6 for a ReLU6 snapshot and ``None`` for plain ReLU.
    """

    def __init__(self, W0, b0, u0, cap=6.0, form="linearized", c0=0.0):
        if form not in DECOUPLED_FORMS:
            raise InvalidInputError(f"form must be one of {DECOUPLED_FORMS}")
        W0 = np.array(W0)
        dtype = W0.dtype if W0.dtype in (np.float32, np.float64) else np.float64
        self.dtype = dtype
        self.base = {
            "W": np.array(W0, dtype=dtype),
            "b": np.array(b0, dtype=dtype),
            "u": np.array(u0, dtype=dtype),
        }
        for a in self.base.values():
            a.flags.writeable = False
        self.cap = cap
        self.form = form
        self.params = {k: v.copy() for k, v in self.base.items()}
        self.params["c"] = np.array([c0], dtype=dtype)

    def _gates(self, X):
        pre0 = X @ self.base["W"].T + self.base["b"]
        g = pre0 > 0
        if self.cap is not None:
            g &= pre0 < self.cap
        act0 = np.maximum(pre0, 0)
        if self.cap is not None:
            act0 = np.minimum(act0, self.cap)
        return pre0, g.astype(self.dtype), act0

    def gates(self, X):
        return self._gates(np.asarray(X, dtype=self.dtype))[1]

    def _terms(self, X):
        p = self.params
        pre0, g, act0 = self._gates(X)
        pre = X @ p["W"].T + p["b"]
        if self.form == "linearized":
            lin = (pre - pre0) * g
            return (lin @ self.base["u"] + act0 @ p["u"] + p["c"][0]), g, act0, lin
        lin = pre * g
        return lin @ p["u"] + p["c"][0], g, act0, lin

    def predict(self, X):
        return self._terms(np.asarray(X, dtype=self.dtype))[0]

    def loss_grad(self, X, y):
        X = np.asarray(X, dtype=self.dtype)
        yhat, g, act0, lin = self._terms(X)
        loss, coef = _hinge_coef(y, yhat)
        if self.form == "linearized":
            back = (coef[:, None] * g) * self.base["u"]
            du = act0.T @ coef
        else:
            back = (coef[:, None] * g) * self.params["u"]
            du = lin.T @ coef
        return loss, {"W": back.T @ X, "b": back.sum(axis=0), "u": du, "c": np.array([coef.sum()], dtype=self.dtype)}


def decouple(net0, form="linearized", cap=6.0):
    """Frozen-gate model around a ``TwoLayerNet`` (ReLU6) or ``ReluNet`` snapshot."""
    if isinstance(net0, ReluNet):
        p = net0.params
        return DecoupledNet(p["W"], p["b"], p["u"], cap=None, form=form, c0=float(p["c"][0]))
    return DecoupledNet(net0.W, net0.b, net0.u, cap=cap, form=form)


# --------------------------------------------------------------------------- optimizers


@dataclass
class Sgd:
    lr: float = 0.1

    def init(self, params):
        return None

    def step(self, state, params, grads):
        for k, g in grads.items():
            params[k] -= self.lr * g
        return state


@dataclass
class OptimizerState:
    """AdaDelta accumulators: running means of squared gradients and updates."""

    sq_grad: dict = field(default_factory=dict)
    sq_update: dict = field(default_factory=dict)
    steps: int = 0


def adadelta_step(state: OptimizerState, params, grads, rho=0.95, eps=1e-6, lr=1.0):
    """One in-place AdaDelta update; returns ``(params, state)``.

    ``delta = sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g`` with both means
    decayed by ``rho``; the parameter moves by ``-lr * delta``.
    """
    for k, g in grads.items():
        if k not in state.sq_grad:
            state.sq_grad[k] = np.zeros_like(params[k])
            state.sq_update[k] = np.zeros_like(params[k])
        if g.shape != params[k].shape:
            raise InvalidInputError(f"gradient for {k!r} has shape {g.shape}, parameter {params[k].shape}")
        Eg = state.sq_grad[k]
        Ed = state.sq_update[k]
        Eg *= rho
        Eg += (1.0 - rho) * g * g
        delta = np.sqrt(Ed + eps) / np.sqrt(Eg + eps) * g
        Ed *= rho
        Ed += (1.0 - rho) * delta * delta
        params[k] -= lr * delta
    state.steps += 1
    return params, state


@dataclass
class AdaDelta:
    rho: float = 0.95
    eps: float = 1e-6
    lr: float = 1.0

    def init(self, params):
        return OptimizerState()

    def step(self, state, params, grads):
        return adadelta_step(state, params, grads, self.rho, self.eps, self.lr)[1]


def make_optimizer(name, **kw):
    if name == "adadelta":
        return AdaDelta(**kw)
    if name == "sgd":
        return Sgd(**kw)
    raise InvalidInputError(f"unknown optimizer {name!r}")


# --------------------------------------------------------------------------- training loops


def _check_finite(loss, step):
    if not math.isfinite(loss):
        raise NumericError(f"training loss is not finite at step {step}")


def accuracy_of(model, X, y, batch=8192):
    hits = 0
    for s in range(0, len(y), batch):
        hits += int(np.count_nonzero(np.sign(model.predict(X[s : s + batch])) == y[s : s + batch]))
    return hits / len(y)


def hinge_of(model, X, y, batch=8192):
    total = 0.0
    for s in range(0, len(y), batch):
        total += float(np.sum(np.maximum(1.0 - y[s : s + batch] * model.predict(X[s : s + batch]), 0.0)))
    return total / len(y)


def fit_hinge(model, X, y, epochs, batch=128, optimizer=None, rng=0, eval_fn=None, features=None):
    """Minibatch hinge minimization over a fixed dataset.

    Returns a curve: one ``(epoch, accuracy, loss)`` tuple per epoch from
    ``eval_fn(model)`` (epoch 0 is the untrained model).  ``features`` lets a
    ``LinearModel`` reuse a precomputed embedding of ``X``.
    """
    optimizer = optimizer or AdaDelta()
    state = optimizer.init(model.params)
    gen = as_generator(rng)
    curve = []
    if eval_fn is not None:
        curve.append((0,) + tuple(eval_fn(model)))
    step = 0
    for epoch in range(1, epochs + 1):
        order = gen.permutation(len(y))
        for s in range(0, len(y), batch):
            idx = order[s : s + batch]
            if features is not None:
                loss, grads = model.loss_grad(None, y[idx], features=features[idx])
            else:
                loss, grads = model.loss_grad(X[idx], y[idx])
            step += 1
            _check_finite(loss, step)
            state = optimizer.step(state, model.params, grads)
            if hasattr(model, "project"):
                model.project()
        if eval_fn is not None:
            curve.append((epoch,) + tuple(eval_fn(model)))
    return model, curve


def train_linear_hinge(model, data_or_task, epochs, optimizer=None, batch=128, rng=0, eval_data=None):
    """Hinge training of a ``LinearModel`` or ``DecoupledNet``.

    ``data_or_task`` is either ``(X, y)`` (``epochs`` passes of minibatches)
    or a ``ParityTask``, in which case every step draws a fresh batch of
    ``batch`` samples from stream ``(rng, "linear", step)`` and ``epochs``
    counts steps.  ``eval_data`` ``(X, y)`` gives the per-epoch (or per-step)
    ``(step, accuracy, loss)`` curve.
    """
    optimizer = optimizer or AdaDelta()

    def eval_fn(m):
        if eval_data is None:
            return (float("nan"), float("nan"))
        Xe, ye = eval_data
        return accuracy_of(m, Xe, ye), hinge_of(m, Xe, ye)

    if isinstance(data_or_task, ParityTask):
        task = data_or_task
        state = optimizer.init(model.params)
        curve = [(0,) + eval_fn(model)]
        for t in range(1, epochs + 1):
            X, y = sample_batch(task, stream(rng, "linear", t), batch)
            loss, grads = model.loss_grad(X, y)
            _check_finite(loss, t)
            state = optimizer.step(state, model.params, grads)
            if hasattr(model, "project"):
                model.project()
            curve.append((t,) + eval_fn(model))
        return model, curve
    X, y = data_or_task
    feats = model.features(X) if isinstance(model, LinearModel) else None
    return fit_hinge(model, X, y, epochs, batch, optimizer, rng, eval_fn, features=feats)
