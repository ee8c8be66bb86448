"""Fixed embeddings used by the linear baselines and the Fourier audit."""
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import pdist

from .errors import InvalidInputError
from .rng import as_generator

KINDS = ("relu-random", "gaussian-rff", "ntk-gates", "explicit-table")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    kind: str
    input_dim: int
    N: int
    params: dict = field(default_factory=dict)
    clamp: bool = False

    def embed(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise InvalidInputError(f"expected {self.input_dim} inputs, got {X.shape[1]}")
        out = _EMBEDDERS[self.kind](self, X)
        if self.clamp:
            np.clip(out, -1.0, 1.0, out=out)
        return out

    def clamped(self):
        return replace(self, clamp=True)


def _relu_random(fm, X):
    return np.maximum(X @ fm.params["weights"].T + fm.params["bias"], 0.0)


def _gaussian_rff(fm, X):
    return math.sqrt(2.0 / fm.N) * np.cos(X @ fm.params["weights"].T + fm.params["phase"])


def _ntk_gates(fm, X):
    # gradient features of a two-layer net at its frozen init:
    # [act_i(x)] ++ [u_i * gate_i(x) * x] ++ [u_i * gate_i(x)]
    W0, b0, u0 = fm.params["W"], fm.params["b"], fm.params["u"]
    cap = fm.params.get("cap", 6.0)
    pre = X @ W0.T + b0
    act = np.clip(pre, 0.0, cap)
    gate = ((pre > 0.0) & (pre < cap)).astype(np.float64) * u0
    lin = (gate[:, :, None] * X[:, None, :]).reshape(len(X), -1)
    return np.hstack([act, lin, gate])


def _explicit_table(fm, X):
    table = fm.params["table"]
    n = fm.input_dim
    bits = (X < 0).astype(np.int64)
    idx = bits @ (1 << np.arange(n, dtype=np.int64))
    return table[idx].astype(np.float64)


_EMBEDDERS = {
    "relu-random": _relu_random,
    "gaussian-rff": _gaussian_rff,
    "ntk-gates": _ntk_gates,
    "explicit-table": _explicit_table,
}


def median_bandwidth(X, probe=1024):
    X = np.asarray(X, dtype=np.float64)[:probe]
    d = pdist(X)
    d = d[d > 0]
    if d.size == 0:
        raise InvalidInputError("median heuristic needs at least two distinct probe points")
    return float(np.median(d))


def make_feature_map(kind, input_dim, N, params=None, rng=0) -> FeatureMap:
    """Draw a random feature map.

    relu-random: rows ~ Normal(0, 1/input_dim), zero bias, ``max(<w,x>, 0)``.
    gaussian-rff: rows ~ Normal(0, 1/bandwidth^2), phase ~ U[0, 2pi),
    ``sqrt(2/N) cos(<w,x> + phase)``; the bandwidth is taken from
    ``params["bandwidth"]`` or the median pairwise distance of ``params["probe"]``.
    ntk-gates: ``params["net"]`` is the init snapshot (anything with W, b, u).
    explicit-table: ``params["table"]`` has one row per hypercube point.
    """
    params = dict(params or {})
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N}")
    if kind not in KINDS:
        raise InvalidInputError(f"unknown feature map kind {kind!r}")
    gen = as_generator(rng)
    if kind == "relu-random":
        W = gen.normal(0.0, 1.0 / math.sqrt(input_dim), size=(N, input_dim))
        return FeatureMap(kind, input_dim, N, {"weights": W, "bias": np.zeros(N)})
    if kind == "gaussian-rff":
        bw = params.get("bandwidth")
        if bw is None:
            if "probe" not in params:
                raise InvalidInputError("gaussian-rff needs 'bandwidth' or a 'probe' sample")
            bw = median_bandwidth(params["probe"])
        W = gen.normal(0.0, 1.0 / bw, size=(N, input_dim))
        phase = gen.uniform(0.0, 2.0 * math.pi, size=N)
        return FeatureMap(kind, input_dim, N, {"weights": W, "phase": phase, "bandwidth": float(bw)})
    if kind == "ntk-gates":
        net = params["net"]
        m = len(net.u)
        if N != m * (input_dim + 2):
            raise InvalidInputError(f"ntk-gates over {m} neurons has N={m * (input_dim + 2)}")
        return FeatureMap(
            kind,
            input_dim,
            N,
            {"W": np.array(net.W), "b": np.array(net.b), "u": np.array(net.u), "cap": params.get("cap", 6.0)},
        )
    table = np.asarray(params["table"], dtype=np.float64)
    if table.shape != (1 << input_dim, N):
        raise InvalidInputError(f"table must have shape {(1 << input_dim, N)}, got {table.shape}")
    return FeatureMap(kind, input_dim, N, {"table": table})
