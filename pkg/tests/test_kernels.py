import numpy as np
import pytest

from paritylab import kernels


def _problem(seed, P=300, m=17, n=9):
    g = np.random.default_rng(seed)
    X = g.choice([-1.0, 1.0], size=(P, n)) / np.sqrt(n)
    y = g.choice([-1.0, 1.0], size=P)
    w = g.random(P)
    w /= w.sum()
    W = g.integers(-1, 2, size=(m, n)).astype(float) * g.uniform(0.5, 3)
    b = g.uniform(-1, 4, size=m)
    u = g.normal(size=m)
    return X, y, w, W, b, u


def _oracle_gradient(X, y, wts, W, b, u, cap):
    # per-example loop, written independently of either backend
    dW, db, du, loss = np.zeros_like(W), np.zeros_like(b), np.zeros_like(u), 0.0
    for x, yy, ww in zip(X, y, wts):
        z = W @ x + b
        a = np.clip(z, 0, 6)
        out = float(np.dot(u, a))
        m = 1 - yy * out
        if m > 0:
            loss += ww * m
            gate = ((z > 0) & (z < 6)) if cap else (z > 0)
            coef = -yy * ww
            du += coef * a
            db += coef * u * gate
            dW += np.outer(coef * u * gate, x)
    return dW, db, du, loss


@pytest.mark.parametrize("cap", [True, False])
@pytest.mark.parametrize("impl", ["numpy", "numba"])
def test_gradient_matches_loop_oracle(impl, cap):
    if impl == "numba" and not kernels.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    X, y, w, W, b, u = _problem(1)
    fn = getattr(kernels, f"weighted_gradient_{impl}")
    got = fn(X, y, w, W, b, u, cap)
    want = _oracle_gradient(X, y, w, W, b, u, cap)
    for a, c in zip(got[:3], want[:3]):
        np.testing.assert_allclose(a, c, rtol=1e-12, atol=1e-14)
    assert got[3] == pytest.approx(want[3], rel=1e-12)


@pytest.mark.parametrize("impl", ["numpy", "numba"])
def test_forward_matches_direct_sum(impl):
    if impl == "numba" and not kernels.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    X, _, _, W, b, u = _problem(2)
    fn = getattr(kernels, f"forward_batch_{impl}")
    direct = np.array([sum(u[i] * min(max(W[i] @ x + b[i], 0), 6) for i in range(len(u))) for x in X])
    np.testing.assert_allclose(fn(X, W, b, u), direct, rtol=1e-12, atol=1e-12)


def test_signs_from_index_backends_agree():
    a = kernels.signs_from_index_numpy(5, 100, 9)
    if kernels.HAVE_NUMBA:
        assert np.array_equal(a, kernels.signs_from_index_numba(5, 100, 9))
    assert np.array_equal(a[0], [-1, 1, -1, 1, 1, 1, 1, 1, 1])


def test_mirrored_pairs_cancel_exactly():
    X, _, _, W, b, u = _problem(3, m=40)
    W2, b2, u2 = np.vstack([W, W]), np.concatenate([b, b]), np.concatenate([u, -u])
    assert np.all(kernels.forward_batch(X, W2, b2, u2) == 0.0)


def test_chunking_does_not_change_results(monkeypatch):
    X, y, w, W, b, u = _problem(4, P=1000)
    full = kernels.weighted_gradient_numpy(X, y, w, W, b, u)
    monkeypatch.setattr(kernels, "CHUNK_ELEMS", 50)
    small = kernels.weighted_gradient_numpy(X, y, w, W, b, u)
    for a, c in zip(full[:3], small[:3]):
        np.testing.assert_allclose(a, c, rtol=1e-12, atol=1e-15)
