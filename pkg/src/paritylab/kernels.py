"""Hot numeric kernels for the two-layer ReLU6 network.

Each kernel exists twice: ``*_numba`` (loop form, compiled with ``@njit``) and
``*_numpy`` (vectorised, chunked so the pre-activation matrix never exceeds
``CHUNK_ELEMS`` entries).  The public names (``weighted_gradient``,
``forward_batch``, ``signs_from_index``) are bound to whichever backend
``PARITYLAB_BACKEND`` selected; ``benchmarks/bench_kernels.py`` times both.

Both paths reduce over examples in a fixed order, so each is bit-for-bit
reproducible on its own.  The two backends agree to rounding only.

Output reduction: neuron ``i`` is paired with neuron ``i + m//2`` before the
sum, so a mirrored network whose pairs cancel evaluates to exactly 0.0.

Gate convention: ``gate_cap=True`` means the ReLU6 derivative, 1 on the open
interval (0, 6) and 0 elsewhere (including both kinks).  ``gate_cap=False``
uses the plain indicator ``z > 0``; the activation value is ReLU6 either way.
"""
import numpy as np

from ._accel import BACKEND, HAVE_NUMBA, njit

CHUNK_ELEMS = 1 << 22
RELU6_CAP = 6.0


# --------------------------------------------------------------------------- numpy


def signs_from_index_numpy(start, count, n):
    idx = np.arange(start, start + count, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n, dtype=np.int64)[None, :]) & 1
    return (1 - 2 * bits).astype(np.int8)


def _rows_per_chunk(width):
    return max(1, CHUNK_ELEMS // max(width, 1))


def _paired_output(act, u):
    contrib = act * u
    h = contrib.shape[1] // 2
    out = (contrib[:, :h] + contrib[:, h : 2 * h]).sum(axis=1)
    if contrib.shape[1] % 2:
        out += contrib[:, -1]
    return out


def forward_batch_numpy(X, W, b, u):
    P = X.shape[0]
    out = np.empty(P, dtype=np.float64)
    step = _rows_per_chunk(W.shape[0])
    for s in range(0, P, step):
        pre = X[s : s + step] @ W.T + b
        np.clip(pre, 0.0, RELU6_CAP, out=pre)
        out[s : s + step] = _paired_output(pre, u)
    return out


def weighted_gradient_numpy(X, y, wts, W, b, u, gate_cap=True):
    m, n = W.shape
    dW = np.zeros((m, n))
    db = np.zeros(m)
    du = np.zeros(m)
    loss = 0.0
    step = _rows_per_chunk(m)
    for s in range(0, X.shape[0], step):
        Xc, yc, wc = X[s : s + step], y[s : s + step], wts[s : s + step]
        pre = Xc @ W.T + b
        act = np.clip(pre, 0.0, RELU6_CAP)
        if gate_cap:
            gate = (pre > 0.0) & (pre < RELU6_CAP)
        else:
            gate = pre > 0.0
        margin = 1.0 - yc * _paired_output(act, u)
        active = margin > 0.0
        loss += float(np.dot(wc[active], margin[active]))
        g = np.where(active, -yc * wc, 0.0)
        du += act.T @ g
        coef = (g[:, None] * gate) * u
        dW += coef.T @ Xc
        db += coef.sum(axis=0)
    return dW, db, du, loss


# --------------------------------------------------------------------------- numba


@njit
def signs_from_index_numba(start, count, n):
    out = np.empty((count, n), dtype=np.int8)
    for p in range(count):
        idx = start + p
        for j in range(n):
            out[p, j] = -1 if (idx >> j) & 1 else 1
    return out


@njit
def _paired_sum_numba(act, u):
    m = act.shape[0]
    h = m // 2
    acc = 0.0
    for i in range(h):
        acc += u[i] * act[i] + u[i + h] * act[i + h]
    if m % 2:
        acc += u[m - 1] * act[m - 1]
    return acc


@njit
def forward_batch_numba(X, W, b, u):
    P, n = X.shape
    m = W.shape[0]
    out = np.empty(P)
    act = np.empty(m)
    for p in range(P):
        for i in range(m):
            z = b[i]
            for j in range(n):
                z += W[i, j] * X[p, j]
            act[i] = 0.0 if z <= 0.0 else (z if z < RELU6_CAP else RELU6_CAP)
        out[p] = _paired_sum_numba(act, u)
    return out


@njit
def weighted_gradient_numba(X, y, wts, W, b, u, gate_cap=True):
    P, n = X.shape
    m = W.shape[0]
    dW = np.zeros((m, n))
    db = np.zeros(m)
    du = np.zeros(m)
    pre = np.empty(m)
    act = np.empty(m)
    loss = 0.0
    for p in range(P):
        for i in range(m):
            z = b[i]
            for j in range(n):
                z += W[i, j] * X[p, j]
            pre[i] = z
            a = 0.0
            if z > 0.0:
                a = z if z < RELU6_CAP else RELU6_CAP
            act[i] = a
        yhat = _paired_sum_numba(act, u)
        margin = 1.0 - y[p] * yhat
        if margin <= 0.0:
            continue
        loss += wts[p] * margin
        g = -y[p] * wts[p]
        for i in range(m):
            du[i] += g * act[i]
            z = pre[i]
            if z > 0.0 and (z < RELU6_CAP or not gate_cap):
                c = g * u[i]
                db[i] += c
                for j in range(n):
                    dW[i, j] += c * X[p, j]
    return dW, db, du, loss


# --------------------------------------------------------------------------- dispatch

if BACKEND == "numba" and HAVE_NUMBA:
    _signs, _forward, _gradient = (
        signs_from_index_numba,
        forward_batch_numba,
        weighted_gradient_numba,
    )
else:
    _signs, _forward, _gradient = (
        signs_from_index_numpy,
        forward_batch_numpy,
        weighted_gradient_numpy,
    )


def _f64(*arrays):
    return [np.ascontiguousarray(a, dtype=np.float64) for a in arrays]


def signs_from_index(start, count, n):
    """Sign patterns for hypercube indices ``start .. start+count-1``.

    Bit ``j`` of the index set means coordinate ``j`` is negative.
    """
    return _signs(int(start), int(count), int(n))


def forward_batch(X, W, b, u):
    return _forward(*_f64(X, W, b, u))


def weighted_gradient(X, y, wts, W, b, u, gate_cap=True):
    """Gradient of ``sum_p wts[p] * hinge(y[p], g(X[p]))`` w.r.t. ``(W, b, u)``.

    Returns ``(dW, db, du, loss)``.
    """
    return _gradient(*_f64(X, y, wts, W, b, u), bool(gate_cap))
