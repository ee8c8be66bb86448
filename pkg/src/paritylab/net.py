"""The two-layer ReLU6 network, its symmetric initialization and gradients.

    g(x) = sum_i u_i * relu6(<w_i, x> + b_i),     i = 1 .. 2q

Gradients are closed form (no autodiff).  The activation derivative is the
``gate`` returned by :func:`relu6`: 1 on the open interval (0, 6), else 0.
"""
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InvalidInputError
from .parity import DEFAULT_CAP, EXACT, ParityTask, batches
from .rng import stream

GATE_CONVENTIONS = ("relu6", "positive")


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TwoLayerNet:
    """Immutable parameter snapshot; rows of ``W`` are the neuron weights."""

    W: np.ndarray
    b: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", _frozen(np.atleast_2d(self.W)))
        object.__setattr__(self, "b", _frozen(self.b))
        object.__setattr__(self, "u", _frozen(self.u))
        m = self.W.shape[0]
        if self.b.shape != (m,) or self.u.shape != (m,):
            raise InvalidInputError("W, b, u disagree on the number of neurons")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.u))):
            raise InvalidInputError("network parameters must be finite")

    @property
    def width(self):
        return self.W.shape[0]

    @property
    def q(self):
        return self.width // 2

    @property
    def n(self):
        return self.W.shape[1]

    def replace(self, W=None, b=None, u=None):
        return TwoLayerNet(
            self.W if W is None else W,
            self.b if b is None else b,
            self.u if u is None else u,
        )


@dataclass(frozen=True, eq=False)
class GradientBundle:
    dW: np.ndarray
    db: np.ndarray
    du: np.ndarray
    loss_value: float
    mode: str

    def __add__(self, other):
        return GradientBundle(
            self.dW + other.dW,
            self.db + other.db,
            self.du + other.du,
            self.loss_value + other.loss_value,
            f"{self.mode}+{other.mode}",
        )

    def scaled(self, c):
        return GradientBundle(c * self.dW, c * self.db, c * self.du, c * self.loss_value, self.mode)


# --------------------------------------------------------------------------- scalar pieces


def relu6(z):
    """``(min(max(z, 0), 6), gate)`` with ``gate = 1`` iff ``0 < z < 6``."""
    z = np.asarray(z, dtype=np.float64)
    value = np.clip(z, 0.0, 6.0)
    gate = ((z > 0.0) & (z < 6.0)).astype(np.int8)
    if value.ndim == 0:
        return float(value), int(gate)
    return value, gate


def hinge(y, yhat):
    """``(max(1 - y*yhat, 0), d loss / d yhat)``; the subgradient is 0 at the kink."""
    y = np.asarray(y, dtype=np.float64)
    margin = 1.0 - y * np.asarray(yhat, dtype=np.float64)
    loss = np.maximum(margin, 0.0)
    grad = np.where(margin > 0.0, -y, 0.0)
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


# --------------------------------------------------------------------------- construction


MIRRORS = ("output-zero", "literal")


def init_symmetric(q, n, k, rng=0, mirror="output-zero"):
    """Mirrored init for ``2q`` neurons; the first ``q`` are drawn as

    ``w_i ~ U({-1,0,1}^n)``, ``b_i = 1/(8k)``, ``u_i ~ U[-n/k, n/k]``.

    ``mirror="output-zero"`` sets neuron ``q+i`` to ``(w_i, b_i, -u_i)`` so the
    network is identically zero, which the first-step analysis relies on.
    ``mirror="literal"`` negates all three, ``(-w_i, -b_i, -u_i)``; that does
    not cancel under ReLU6 (``u*relu6(z) - u*relu6(-z) != 0``).

    Neuron ``i`` draws from its own substream ``(rng, "init", i)`` so changing
    ``q`` keeps the first neurons fixed.
    """
    if q < 1 or n < 1:
        raise InvalidInputError(f"need q, n >= 1 (got q={q}, n={n})")
    if k < 3 or k % 2 == 0:
        raise InvalidInputError(f"k must be odd and >= 3, got {k}")
    if mirror not in MIRRORS:
        raise InvalidInputError(f"mirror must be one of {MIRRORS}")
    W = np.empty((q, n))
    u = np.empty(q)
    for i in range(q):
        gen = stream(rng, "init", i)
        W[i] = gen.integers(-1, 2, size=n)
        u[i] = gen.uniform(-n / k, n / k)
    b = np.full(q, 1.0 / (8 * k))
    s = 1.0 if mirror == "output-zero" else -1.0
    return TwoLayerNet(np.vstack([W, s * W]), np.concatenate([b, s * b]), np.concatenate([u, -u]))


# --------------------------------------------------------------------------- evaluation


def forward(net: TwoLayerNet, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.n:
        raise InvalidInputError(f"input has {x.shape[-1]} coordinates, net expects {net.n}")
    if x.ndim == 1:
        return float(kernels.forward_batch(x[None, :], net.W, net.b, net.u)[0])
    return kernels.forward_batch(x, net.W, net.b, net.u)


def activations(net: TwoLayerNet, X):
    """Per-neuron ``relu6`` values for a batch, shape ``(len(X), width)``."""
    return np.clip(np.asarray(X, dtype=np.float64) @ net.W.T + net.b, 0.0, 6.0)


def regularizer(net: TwoLayerNet):
    """``||u||^2 + sum_i ||w_i||^2`` and its gradient (zero on the biases)."""
    value = float(np.dot(net.u, net.u) + np.sum(net.W * net.W))
    return value, GradientBundle(2.0 * net.W, np.zeros_like(net.b), 2.0 * net.u, value, "regularizer")


def _mode_name(mode):
    return mode if isinstance(mode, str) else repr(mode)


def population_gradient(net: TwoLayerNet, task: ParityTask, mode=EXACT, gate="relu6", cap=DEFAULT_CAP):
    """Gradient of the expected hinge loss under the task distribution.

    The regularizer is not included.  ``mode`` is ``"exact"`` (support
    enumeration, deterministic), a ``MonteCarlo`` or an ``Empirical`` sample.
    """
    if gate not in GATE_CONVENTIONS:
        raise InvalidInputError(f"gate convention must be one of {GATE_CONVENTIONS}")
    if task.n != net.n:
        raise InvalidInputError(f"net has n={net.n}, task has n={task.n}")
    dW = np.zeros_like(net.W)
    db = np.zeros_like(net.b)
    du = np.zeros_like(net.u)
    loss = 0.0
    for X, y, w in batches(task, mode, cap):
        gW, gb, gu, l = kernels.weighted_gradient(X, y, w, net.W, net.b, net.u, gate == "relu6")
        dW += gW
        db += gb
        du += gu
        loss += l
    return GradientBundle(dW, db, du, loss, _mode_name(mode))


def evaluate(net_or_predictor, task: ParityTask, mode=EXACT, cap=DEFAULT_CAP):
    """``(hinge loss, accuracy)``; a prediction of exactly 0 counts as an error."""
    predict = (
        (lambda X: kernels.forward_batch(X, net_or_predictor.W, net_or_predictor.b, net_or_predictor.u))
        if isinstance(net_or_predictor, TwoLayerNet)
        else net_or_predictor
    )
    loss = acc = 0.0
    for X, y, w in batches(task, mode, cap):
        yhat = np.asarray(predict(X), dtype=np.float64)
        loss += float(np.dot(w, np.maximum(1.0 - y * yhat, 0.0)))
        acc += float(np.dot(w, np.sign(yhat) == y))
    return loss, acc


def population_loss(net, task, mode=EXACT, cap=DEFAULT_CAP):
    return evaluate(net, task, mode, cap)[0]


# --------------------------------------------------------------------------- snapshots

SNAPSHOT_MAGIC = b"PLNET\x00\x01\x00"
SNAPSHOT_FORMAT = "paritylab.two-layer-net/1"


def save_net(net: TwoLayerNet, path):
    """Write a snapshot; ``.json`` gives the text layout, anything else binary.

    Binary layout: 8-byte magic, little-endian int64 ``width`` and ``n``, then
    float64 ``W`` (row-major), ``b`` and ``u``.  JSON layout: ``format``,
    ``width``, ``n`` and the same three arrays flattened row-major.
    """
    path = Path(path)
    if path.suffix == ".json":
        doc = {
            "format": SNAPSHOT_FORMAT,
            "width": net.width,
            "n": net.n,
            "W": net.W.ravel().tolist(),
            "b": net.b.tolist(),
            "u": net.u.tolist(),
        }
        path.write_text(json.dumps(doc))
        return path
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<qq", net.width, net.n))
        for arr in (net.W, net.b, net.u):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_net(path) -> TwoLayerNet:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        if doc.get("format") != SNAPSHOT_FORMAT:
            raise InvalidInputError(f"{path}: not a network snapshot")
        m, n = doc["width"], doc["n"]
        return TwoLayerNet(np.reshape(doc["W"], (m, n)), doc["b"], doc["u"])
    raw = path.read_bytes()
    if raw[:8] != SNAPSHOT_MAGIC:
        raise InvalidInputError(f"{path}: bad snapshot magic")
    m, n = struct.unpack("<qq", raw[8:24])
    body = np.frombuffer(raw, dtype="<f8", offset=24)
    if body.size != m * n + 2 * m:
        raise InvalidInputError(f"{path}: expected {m * n + 2 * m} values, found {body.size}")
    return TwoLayerNet(body[: m * n].reshape(m, n), body[m * n : m * n + m], body[m * n + m :])
