"""Executable checks of the first-step lemmas and the separator construction.

Every check returns a report object with ``lemma`` (a stable name used for
the JSON file), the measured quantities, and ``passed`` for the properties
that are exactly checkable.  Unnamed universal constants are reported, never
asserted.
"""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import comb
from scipy.stats import binom

from . import kernels
from .errors import CapacityError, InvalidInputError, SeparatorInfeasibleError
from .net import TwoLayerNet
from .parity import DEFAULT_CAP, EXACT, MonteCarlo, ParityTask, batches, iter_support, sample_batch
from .rng import as_generator, stream

GUARD = 1e-12


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


class _Report:
    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _gate(z, gate):
    if gate == "relu6":
        return (z > 0.0) & (z < 6.0)
    if gate == "positive":
        return z > 0.0
    raise InvalidInputError(f"unknown gate convention {gate!r}")


# --------------------------------------------------------------------------- zero gradient on D^(2)


@dataclass
class ZeroGradientReport(_Report):
    lemma: str
    gate: str
    sum_wA: int
    max_abs_offA: float
    abs_bias_term: float
    offA_terms: list
    passed: bool


def zero_gradient_check(w, b, task: ParityTask, gate="relu6", enforce=True, cap=DEFAULT_CAP, tol=1e-12):
    """Exact ``E_{D2}[x_j f gate]`` for all ``j`` off ``A`` and ``E_{D2}[f gate]``.

    Only the ``2 * 2^(n-k)`` correlated atoms are enumerated.  With
    ``enforce=False`` a vector violating ``sum_A w = 0`` is accepted so the
    nonzero case can be inspected.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (task.n,):
        raise InvalidInputError(f"w must have length n={task.n}")
    if not np.all(np.isin(w, (-1.0, 0.0, 1.0))):
        raise InvalidInputError("w must have entries in {-1, 0, 1}")
    sA = int(round(w[list(task.A)].sum()))
    if enforce and sA != 0:
        raise InvalidInputError(f"sum of w over A is {sA}, the check needs 0")
    if task.n - task.k > cap:
        raise CapacityError(f"correlated support 2^{task.n - task.k} exceeds cap 2^{cap}")
    off = np.array(task.off_A)
    acc_off = np.zeros(len(off))
    acc_b = 0.0
    for part in iter_support(task, "correlated-only", cap=max(cap, task.n)):
        X = part.X
        g = _gate(X @ w + b, gate) * part.weights * part.labels
        acc_off += X[:, off].T @ g
        acc_b += float(g.sum())
    m = float(np.abs(acc_off).max(initial=0.0))
    return ZeroGradientReport(
        lemma="zero_gradient",
        gate=gate,
        sum_wA=sA,
        max_abs_offA=m,
        abs_bias_term=abs(acc_b),
        offA_terms=acc_off.tolist(),
        passed=bool(m <= tol and abs(acc_b) <= tol),
    )


def random_admissible_w(task: ParityTask, rng):
    """Uniform ``w`` in {-1,0,1}^n conditioned on ``sum_A w = 0`` (by rejection)."""
    gen = as_generator(rng)
    A = list(task.A)
    while True:
        w = gen.integers(-1, 2, size=task.n).astype(np.float64)
        if w[A].sum() == 0:
            return w


# --------------------------------------------------------------------------- uniform-part concentration


@dataclass
class UniformGradientReport(_Report):
    lemma: str
    n: int
    k: int
    b: float
    c: float
    trials: int
    threshold: float
    coord_quantiles: dict
    bias_quantiles: dict
    coord_exceed_fraction: float
    bias_exceed_fraction: float
    allowed: float
    passed: bool


def _quantiles(v):
    qs = (0.5, 0.9, 0.99, 1.0)
    return {str(q): float(np.quantile(v, q)) for q in qs}


def uniform_gradient_stat(task: ParityTask, b, trials, c, seed=0, j=None, gate="relu6", cap=DEFAULT_CAP, slack=None):
    """Exceedance rate of ``|E_U[sqrt(n) x_j f gate]| > c / sqrt(C(n-1, k))`` over random ``w``.

    ``x_j`` is rescaled to a +-1 variable so the quantity matches the
    lemma's Fourier-coefficient argument.  ``j`` fixes one off-A coordinate;
    by default all off-A coordinates are pooled.  Each trial's expectation is
    exact over the ``2^n`` uniform atoms.  ``passed`` compares both rates
    with ``1/c`` plus ``slack`` (default three binomial standard errors).
    """
    if task.n > cap:
        raise CapacityError(f"exact enumeration over n={task.n} exceeds cap={cap}")
    n = task.n
    coords = list(task.off_A) if j is None else [int(j)]
    if any(c_ in task.A for c_ in coords):
        raise InvalidInputError("j must lie outside A")
    gen = stream(seed, "uniform-gradient")
    W = gen.integers(-1, 2, size=(trials, n)).astype(np.float64)
    signs = kernels.signs_from_index(0, 1 << n, n).astype(np.float64)
    f = np.prod(signs[:, list(task.A)], axis=1)
    X = signs / math.sqrt(n)
    coord = np.empty((trials, len(coords)))
    bias = np.empty(trials)
    step = max(1, (1 << 22) // (1 << n))
    for s in range(0, trials, step):
        G = _gate(X @ W[s : s + step].T + b, gate).astype(np.float64) * f[:, None]
        coord[s : s + step] = (signs[:, coords].T @ G).T / (1 << n)
        bias[s : s + step] = G.mean(axis=0)
    thr = c / math.sqrt(comb(n - 1, task.k, exact=True))
    ce = float(np.mean(np.abs(coord) > thr))
    be = float(np.mean(np.abs(bias) > thr))
    p = min(1.0, 1.0 / c)
    if slack is None:
        slack = 3.0 * math.sqrt(max(p * (1 - p), 1e-12) / trials)
    allowed = p + slack
    return UniformGradientReport(
        lemma="bound_uniform_one_coord",
        n=n,
        k=task.k,
        b=float(b),
        c=float(c),
        trials=int(trials),
        threshold=thr,
        coord_quantiles=_quantiles(np.abs(coord)),
        bias_quantiles=_quantiles(np.abs(bias)),
        coord_exceed_fraction=ce,
        bias_exceed_fraction=be,
        allowed=allowed,
        passed=bool(ce <= allowed and be <= allowed),
    )


# --------------------------------------------------------------------------- anti-concentration window


def varphi(w, b, task: ParityTask, mode=EXACT):
    """``P(k/sqrt(n) < sum_{j in J} w_j x_j + b < 6 - k/sqrt(n))`` under uniform ``x``.

    ``J`` is the off-A support of ``w``.  Each ``w_j x_j`` with ``j in J`` is
    +-1/sqrt(n), so the exact backend sums a binomial pmf over the window
    (shrunk by a 1e-12 guard band on both ends).
    """
    w = np.asarray(w, dtype=np.float64)
    n, k = task.n, task.k
    off = np.array(task.off_A)
    wJ = w[off][w[off] != 0]
    m = len(wJ)
    lo, hi = k / math.sqrt(n), 6.0 - k / math.sqrt(n)
    if mode == EXACT:
        heads = np.arange(m + 1)
        s = (2 * heads - m) / math.sqrt(n) + b
        inside = (s > lo + GUARD) & (s < hi - GUARD)
        return float(binom.pmf(heads[inside], m, 0.5).sum())
    if isinstance(mode, MonteCarlo):
        gen = mode.generator()
        flips = gen.integers(0, 2, size=(int(mode.samples), m)) * 2 - 1
        s = flips @ wJ / math.sqrt(n) + b
        return float(np.mean((s > lo) & (s < hi)))
    raise InvalidInputError(f"unsupported mode {mode!r}")


# --------------------------------------------------------------------------- first step geometry


@dataclass
class NeuronDiagnostics:
    index: int
    sum_wA: int
    J_size: int
    alpha: float
    drift_on_A: float
    drift_off_A: float
    bias_drift: float
    concentration: bool
    is_good: bool


@dataclass
class FirstStepReport(_Report):
    lemma: str
    n: int
    k: int
    q: int
    sum_zero_fraction: float
    sum_zero_expected: float
    sum_zero_stderr: float
    good_fraction: float
    good_fraction_stderr: float
    good_fraction_floor: float
    concentration_threshold: float
    C1_empirical: float
    C2_times_n_minus_1: float
    C3_times_sqrt_n: float
    alpha_min_good: float
    alpha_fit: float
    neurons: list = field(default_factory=list, repr=False)


def sum_zero_probability(k):
    """``P(sum of k iid U{-1,0,1} = 0)`` by direct trinomial enumeration."""
    from itertools import product

    hits = sum(1 for t in product((-1, 0, 1), repeat=k) if sum(t) == 0)
    return hits / 3**k


def _uniform_terms(W, b, task, gate, cap):
    """Exact ``max_j |E_U[sqrt(n) x_j f gate]|`` (off A) and ``|E_U[f gate]|`` per row."""
    n = task.n
    signs = kernels.signs_from_index(0, 1 << n, n).astype(np.float64)
    f = np.prod(signs[:, list(task.A)], axis=1)
    X = signs / math.sqrt(n)
    off = list(task.off_A)
    coord = np.empty(len(W))
    bias = np.empty(len(W))
    step = max(1, (1 << 22) // (1 << n))
    for s in range(0, len(W), step):
        G = _gate(X @ W[s : s + step].T + b[s : s + step], gate).astype(np.float64) * f[:, None]
        coord[s : s + step] = np.abs(signs[:, off].T @ G).max(axis=0) / (1 << n)
        bias[s : s + step] = np.abs(G.mean(axis=0))
    return coord, bias


def first_step_diagnostics(net0: TwoLayerNet, net1: TwoLayerNet, task: ParityTask, gate="relu6", cap=DEFAULT_CAP, keep_neurons=True):
    """Classify the first ``q`` neurons after one exact step.

    A neuron is *good* when ``sum_A w = 0``, ``|J| >= (n-k)/3`` and the
    uniform-part concentration event holds (every off-A coordinate and the
    bias below ``14 sqrt(k) (n-1) / sqrt(C(n-1,k))``).  When that threshold is
    at least 1 the event is automatic and is not enumerated.
    """
    n, k, q = task.n, task.k, net0.q
    A = list(task.A)
    off = list(task.off_A)
    W0, b0, u0 = net0.W[:q], net0.b[:q], net0.u[:q]
    W1, b1 = net1.W[:q], net1.b[:q]
    sA = np.rint(W0[:, A].sum(axis=1)).astype(int)
    J = np.count_nonzero(W0[:, off], axis=1)
    thr = 14.0 * math.sqrt(k) * (n - 1) / math.sqrt(comb(n - 1, k, exact=True))
    if thr >= 1.0:
        conc = np.ones(q, dtype=bool)
    else:
        ct, bt = _uniform_terms(W0, b0, task, gate, cap)
        conc = (ct <= thr) & (bt <= thr)
    good = (sA == 0) & (J >= (n - k) / 3.0) & conc
    alpha = np.array([varphi(W0[i], b0[i], task) for i in range(q)])
    target = alpha * u0 / math.sqrt(n)
    d_on = np.abs(W1[:, A] - target[:, None]).max(axis=1)
    d_off = np.abs(W1[:, off]).max(axis=1) if off else np.zeros(q)
    d_b = np.abs(b1 - b0)
    p0 = sum_zero_probability(k)
    gf = float(good.mean())
    if good.any():
        g = np.flatnonzero(good)
        x = target[g]
        yv = W1[g][:, A].mean(axis=1)
        alpha_fit = float(x @ yv / (x @ x)) if x @ x > 0 else float("nan")
        c1 = float(d_on[g].max())
        c2 = float(d_off[g].max() * (n - 1))
        c3 = float(d_b[g].max() * math.sqrt(n))
        amin = float(alpha[g].min())
    else:
        alpha_fit = c1 = c2 = c3 = amin = float("nan")
    neurons = []
    if keep_neurons:
        neurons = [
            NeuronDiagnostics(i, int(sA[i]), int(J[i]), float(alpha[i]), float(d_on[i]), float(d_off[i]), float(d_b[i]), bool(conc[i]), bool(good[i]))
            for i in range(q)
        ]
    return FirstStepReport(
        lemma="neuron_first_step",
        n=n,
        k=k,
        q=q,
        sum_zero_fraction=float(np.mean(sA == 0)),
        sum_zero_expected=p0,
        sum_zero_stderr=math.sqrt(p0 * (1 - p0) / q),
        good_fraction=gf,
        good_fraction_stderr=math.sqrt(max(gf * (1 - gf), 1e-300) / q),
        good_fraction_floor=1.0 / (14.0 * math.sqrt(k)),
        concentration_threshold=thr,
        C1_empirical=c1,
        C2_times_n_minus_1=c2,
        C3_times_sqrt_n=c3,
        alpha_min_good=amin,
        alpha_fit=alpha_fit,
        neurons=neurons,
    )


# --------------------------------------------------------------------------- staircase


@dataclass
class StaircaseReport(_Report):
    lemma: str
    k: int
    coefficients: str
    activation: str
    grid: list
    v: list
    signs: list
    values: list
    target: list
    identity_max_error: float
    cap_binds: bool
    passed: bool


def ramp(r, z, activation="relu6"):
    """``phi_r(z) = sigma(-sign(r) z + |r|)``."""
    arg = -np.sign(r) * np.asarray(z, dtype=np.float64) + abs(r)
    out = np.maximum(arg, 0.0)
    return np.minimum(out, 6.0) if activation == "relu6" else out


def staircase_coefficients(k, coefficients="stated"):
    """``(grid, v, signs)`` for the ramp expansion of parity on ``z in {-k, ..., k}``.

    ``"stated"``: ``v = 1`` at ``|r| = k``, 2.5 at ``|r| = 1``, 2 otherwise,
    sign ``(-1)^((k-r)/2)``.  ``"corrected"``: the unique exact solution for
    uncapped ramps, ``v = 2`` inside, ``v = 1.5`` (k = 3 mod 4) or 0.5
    (k = 1 mod 4) at ``|r| = k``, sign ``(-1)^((k-r)/2 + 1)``.
    """
    if k < 1 or k % 2 == 0:
        raise InvalidInputError(f"k must be odd, got {k}")
    grid = list(range(-k, k + 1, 2))
    if coefficients == "stated":
        v = [1.0 if abs(r) == k else 2.5 if abs(r) == 1 else 2.0 for r in grid]
        s = [(-1) ** ((k - r) // 2) for r in grid]
    elif coefficients == "corrected":
        edge = 1.5 if k % 4 == 3 else 0.5
        v = [edge if abs(r) == k else 2.0 for r in grid]
        s = [(-1) ** ((k - r) // 2 + 1) for r in grid]
    else:
        raise InvalidInputError(f"unknown coefficient set {coefficients!r}")
    return grid, v, s


def staircase(k, coefficients="stated", activation="relu6", tol=1e-12) -> StaircaseReport:
    """Evaluate ``sum_r s_r v_r phi_r(z)`` against ``(-1)^((k-z)/2)`` on the grid."""
    if k < 3 or k % 2 == 0:
        raise InvalidInputError(f"k must be odd and >= 3, got {k}")
    grid, v, s = staircase_coefficients(k, coefficients)
    z = np.array(grid, dtype=np.float64)
    vals = np.zeros(len(z))
    cap_binds = False
    for r, vr, sr in zip(grid, v, s):
        arg = -np.sign(r) * z + abs(r)
        cap_binds |= bool(np.any(arg > 6.0))
        vals += sr * vr * ramp(r, z, activation)
    target = np.array([(-1.0) ** ((k - g) // 2) for g in grid])
    err = float(np.max(np.abs(vals - target)))
    return StaircaseReport(
        lemma="good_separator_staircase",
        k=k,
        coefficients=coefficients,
        activation=activation,
        grid=grid,
        v=v,
        signs=s,
        values=vals.tolist(),
        target=target.tolist(),
        identity_max_error=err,
        cap_binds=cap_binds,
        passed=bool(err <= tol),
    )


# --------------------------------------------------------------------------- separator


@dataclass
class SeparatorCertificate(_Report):
    lemma: str
    u_star: np.ndarray
    margin: float
    margin_source: str
    l2_norm: float
    l0_norm: int
    bucket_assignment: dict
    bucket_sizes: dict
    epsilon: float
    all_correct: bool

    def to_dict(self):
        d = super().to_dict()
        d["u_star"] = None  # large; stored separately when needed
        return d


def neuron_responses(net1: TwoLayerNet, net0: TwoLayerNet, task: ParityTask, grid):
    """Rescaled responses ``(|r|/b0) relu6(a_bar z / sqrt(n) + b1)`` per neuron.

    ``a_bar`` is the mean first-layer weight over ``A``; off-A weights are
    ignored here and accounted for by the margin evaluation.  Returns an array
    ``(neurons, len(grid))`` of ``relu6(...) / b0``; multiply by ``|r|``.
    """
    A = list(task.A)
    a_bar = net1.W[:, A].mean(axis=1)
    z = np.asarray(grid, dtype=np.float64)
    pre = a_bar[:, None] * z[None, :] / math.sqrt(task.n) + net1.b[:, None]
    b0 = net0.b
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.clip(pre, 0.0, 6.0) / b0[:, None]
    out[b0 <= 0] = np.nan
    return out


def build_separator(
    net1: TwoLayerNet,
    net0: TwoLayerNet,
    task: ParityTask,
    epsilon=None,
    q_min_per_bucket=1,
    coefficients="corrected",
    cap=DEFAULT_CAP,
    margin_samples=200000,
    seed=0,
):
    """Second-layer weights realizing parity on the step-1 features.

    Each neuron with ``b0 > 0`` is assigned to the bucket ``r`` whose ramp
    ``psi_r`` (uncapped) its rescaled response matches best on the z-grid,
    provided the sup error is at most ``epsilon`` (default ``1/(10k)``).
    ``u*_i = s_r v_r |r| / (|J_r| b0_i)``.  The margin ``min g*(x) f(x)`` is
    exact on the full support when ``n <= cap``, else on a fresh sample.
    """
    k = task.k
    eps = 1.0 / (10 * k) if epsilon is None else float(epsilon)
    grid, v, s = staircase_coefficients(k, coefficients)
    z = np.array(grid, dtype=np.float64)
    resp = neuron_responses(net1, net0, task, grid)
    errs = np.full((net1.width, len(grid)), np.inf)
    for c, r in enumerate(grid):
        target = np.maximum(-np.sign(r) * z + abs(r), 0.0)
        e = np.max(np.abs(abs(r) * resp - target[None, :]), axis=1)
        errs[:, c] = np.where(np.isnan(e), np.inf, e)
    best = np.argmin(errs, axis=1)
    ok = errs[np.arange(net1.width), best] <= eps
    u = np.zeros(net1.width)
    assignment = {}
    sizes = {}
    for c, r in enumerate(grid):
        members = np.flatnonzero(ok & (best == c))
        sizes[r] = int(len(members))
        if len(members) < q_min_per_bucket:
            raise SeparatorInfeasibleError(r, len(members), q_min_per_bucket)
        u[members] = s[c] * v[c] * abs(r) / (len(members) * net0.b[members])
        for i in members:
            assignment[int(i)] = r
    margin, source, correct = separator_margin(net1, u, task, cap, margin_samples, seed)
    return SeparatorCertificate(
        lemma="good_separator",
        u_star=u,
        margin=margin,
        margin_source=source,
        l2_norm=float(np.linalg.norm(u)),
        l0_norm=int(np.count_nonzero(u)),
        bucket_assignment=assignment,
        bucket_sizes=sizes,
        epsilon=eps,
        all_correct=correct,
    )


def separator_margin(net1: TwoLayerNet, u_star, task: ParityTask, cap=DEFAULT_CAP, samples=200000, seed=0):
    """``(min g*(x) f(x), source, every point classified correctly)``."""
    probe = net1.replace(u=u_star)
    if task.n <= cap:
        parts, source = ((X, y) for X, y, _ in batches(task, EXACT, cap)), "exact"
    else:
        X, y = sample_batch(task, stream(seed, "margin"), samples)
        parts, source = [(X, y)], f"sample({samples})"
    m = math.inf
    for X, y in parts:
        g = kernels.forward_batch(X, probe.W, probe.b, probe.u)
        m = min(m, float(np.min(g * y)))
    return m, source, bool(m > 0)


# --------------------------------------------------------------------------- training-time bounds


@dataclass
class SecondLayerReport(_Report):
    lemma: str
    max_abs_u1: float
    bound: float
    passed: bool


def second_layer_bound_check(net1: TwoLayerNet, task: ParityTask, tol=1e-9):
    bound = task.k / math.sqrt(task.n)
    m = float(np.max(np.abs(net1.u)))
    return SecondLayerReport("bound_second_layer", m, bound, bool(m <= bound + tol))


def drift_bounds(t, eta, lam, k, n):
    """Corrected weight and bias drift bounds at step ``t``."""
    b_bound = 6.0 * eta**2 * t**2 + eta * t * k / math.sqrt(n)
    return 2.0 * eta * t * lam * n / k + b_bound, b_bound


@dataclass
class DriftReport(_Report):
    lemma: str
    steps: list
    w_drift: list
    w_bound: list
    b_drift: list
    b_bound: list
    min_w_slack: float
    min_b_slack: float
    passed: bool


def weight_drift_check(trace, eta, lam, k, n):
    """Compare recorded drifts (steps t > 1) with the corrected bounds."""
    steps, wd, wb, bd, bb = [], [], [], [], []
    for rec in trace.records:
        t = rec["step"]
        if t <= 1:
            continue
        w_bound, b_bound = drift_bounds(t, eta, lam, k, n)
        steps.append(t)
        wd.append(rec["w_drift"])
        bd.append(rec["b_drift"])
        wb.append(w_bound)
        bb.append(b_bound)
    ws = min((b - d for b, d in zip(wb, wd)), default=math.inf)
    bs = min((b - d for b, d in zip(bb, bd)), default=math.inf)
    return DriftReport("bound_weights_distance", steps, wd, wb, bd, bb, ws, bs, bool(ws >= 0 and bs >= 0))


@dataclass
class LossLipReport(_Report):
    lemma: str
    steps: list
    measured: list
    bound: list
    min_slack: float
    passed: bool


def loss_lip_check(trace, u_star, eta, lam, k, n, task=None, mode=EXACT, cap=DEFAULT_CAP):
    """Max change of the hinge loss of ``g^{u*}`` between step 1 and step t.

    Needs ``trace.snapshots`` (train with ``keep_snapshots=True``).  The
    maximum is over the exact support when ``mode`` is exact.
    """
    if not trace.snapshots or len(trace.snapshots) < 2:
        raise InvalidInputError("loss_lip_check needs training snapshots")
    u_star = np.asarray(u_star, dtype=np.float64)
    l2 = float(np.linalg.norm(u_star))
    l0 = int(np.count_nonzero(u_star))
    net1 = trace.snapshots[1]
    if task is None:
        raise InvalidInputError("task is required")
    data = list(batches(task, mode, cap))
    base = [np.maximum(1.0 - y * kernels.forward_batch(X, net1.W, net1.b, u_star), 0.0) for X, y, _ in data]
    steps, meas, bnd = [], [], []
    for t in range(1, len(trace.snapshots)):
        nt = trace.snapshots[t]
        d = 0.0
        for (X, y, _), l1 in zip(data, base):
            lt = np.maximum(1.0 - y * kernels.forward_batch(X, nt.W, nt.b, u_star), 0.0)
            d = max(d, float(np.max(np.abs(lt - l1))))
        steps.append(t)
        meas.append(d)
        bnd.append(2.0 * l2 * math.sqrt(l0) * (6.0 * eta**2 * t**2 + eta * t * k / math.sqrt(n) + eta * t * lam * n / k))
    slack = min(b - m for b, m in zip(bnd, meas))
    return LossLipReport("loss_lip_bound", steps, meas, bnd, slack, bool(slack >= 0))
