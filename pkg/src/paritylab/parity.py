"""Parity targets, the mixture distribution family and exact enumeration.

Instances live on ``{+-1/sqrt(n)}^n``.  Internally a point is carried as an
``int8`` sign vector; the float instance is ``signs * (1/sqrt(n))``.  Labels
are always computed from sign bits, never from the floating product.

Index sets are 0-based throughout the package.
"""
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from . import kernels
from .errors import CapacityError, InvalidInputError
from .rng import as_generator, stream

DEFAULT_CAP = 22
AUDIT_CAP = 12
SUPPORT_CHUNK = 1 << 16

COMPONENTS = ("full-mixture", "uniform-only", "correlated-only")


@dataclass(frozen=True)
class ParityTask:
    """Dimension ``n`` and the parity subset ``A`` (0-based, ``|A|`` odd >= 3)."""

    n: int
    A: tuple

    def __post_init__(self):
        A = tuple(int(a) for a in self.A)
        object.__setattr__(self, "A", A)
        if self.n < 1:
            raise InvalidInputError(f"n must be positive, got {self.n}")
        if len(set(A)) != len(A):
            raise InvalidInputError(f"duplicate indices in A={A}")
        if any(a < 0 or a >= self.n for a in A):
            raise InvalidInputError(f"A={A} out of range for n={self.n}")
        if len(A) < 3 or len(A) % 2 == 0:
            raise InvalidInputError(f"|A| must be odd and >= 3, got {len(A)}")

    @classmethod
    def leading(cls, n, k):
        """Task with ``A = {0, ..., k-1}``."""
        return cls(n, tuple(range(k)))

    @property
    def k(self):
        return len(self.A)

    @property
    def scale(self):
        return 1.0 / math.sqrt(self.n)

    @property
    def off_A(self):
        inA = set(self.A)
        return tuple(j for j in range(self.n) if j not in inA)

    def instances(self, signs):
        return np.asarray(signs, dtype=np.float64) * self.scale


class LabeledExample(NamedTuple):
    x: np.ndarray
    y: int


class SupportAtom(NamedTuple):
    x: np.ndarray
    weight: float
    y: int


@dataclass
class Support:
    """A weighted list of atoms stored column-wise."""

    task: ParityTask
    signs: np.ndarray
    weights: np.ndarray
    labels: np.ndarray

    @property
    def X(self):
        return self.task.instances(self.signs)

    def __len__(self):
        return len(self.weights)

    def __iter__(self) -> Iterator[SupportAtom]:
        X = self.X
        for p in range(len(self)):
            yield SupportAtom(X[p], float(self.weights[p]), int(self.labels[p]))

    def expectation(self, values):
        return float(np.dot(self.weights, values))


# --------------------------------------------------------------------------- labels


def parity_character(signs, subset):
    """``prod_{i in subset} sign_i`` for each row; the empty subset gives 1."""
    signs = np.asarray(signs)
    subset = list(subset)
    if not subset:
        return np.ones(signs.shape[:-1], dtype=np.int8)
    neg = np.count_nonzero(signs[..., subset] < 0, axis=-1)
    return (1 - 2 * (neg & 1)).astype(np.int8)


def label(task: ParityTask, x):
    """+1 iff an even number of the ``A`` coordinates of ``x`` are negative.

    Works on one instance or a batch (rows).
    """
    x = np.asarray(x)
    if x.shape[-1] != task.n:
        raise InvalidInputError(f"instance has {x.shape[-1]} coordinates, task has n={task.n}")
    if np.any(x == 0):
        raise InvalidInputError("instance has zero coordinates")
    out = parity_character(x, task.A)
    return int(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------- sampling


def sample_signs(task: ParityTask, rng, size):
    """``size`` sign vectors from the even mixture of uniform and A-correlated."""
    gen = as_generator(rng)
    signs = (1 - 2 * gen.integers(0, 2, size=(size, task.n))).astype(np.int8)
    correlated = gen.random(size) < 0.5
    common = (1 - 2 * gen.integers(0, 2, size=size)).astype(np.int8)
    rows = np.flatnonzero(correlated)
    signs[np.ix_(rows, task.A)] = common[rows, None]
    return signs


def sample_batch(task: ParityTask, rng, size):
    """Returns ``(X, y)`` with ``X`` float instances and ``y`` in {+-1}."""
    signs = sample_signs(task, rng, size)
    return task.instances(signs), parity_character(signs, task.A).astype(np.float64)


def sample(task: ParityTask, rng) -> LabeledExample:
    signs = sample_signs(task, rng, 1)
    return LabeledExample(task.instances(signs[0]), int(parity_character(signs[0], task.A)))


def sample_uniform_signs(n, rng, size):
    gen = as_generator(rng)
    return (1 - 2 * gen.integers(0, 2, size=(size, n))).astype(np.int8)


# --------------------------------------------------------------------------- enumeration


def _check_cap(n, cap):
    if n > cap:
        raise CapacityError(f"exact enumeration over n={n} exceeds cap={cap}")


def iter_support(task: ParityTask, component="full-mixture", cap=DEFAULT_CAP, chunk=SUPPORT_CHUNK):
    """Yield the exact support of ``component`` as ``Support`` chunks.

    Uniform atoms come first in bitmask order (bit ``j`` set means coordinate
    ``j`` negative), then the correlated atoms: A-pattern ``+`` then ``-``,
    free bits in bitmask order over the off-A coordinates.
    """
    if component not in COMPONENTS:
        raise InvalidInputError(f"unknown component {component!r}")
    _check_cap(task.n, cap)
    n, k = task.n, task.k
    if component == "full-mixture":
        w_unif, w_corr = 0.5 * 2.0**-n, 0.25 * 2.0 ** -(n - k)
    elif component == "uniform-only":
        w_unif, w_corr = 2.0**-n, None
    else:
        w_unif, w_corr = None, 0.5 * 2.0 ** -(n - k)

    if w_unif is not None:
        total = 1 << n
        for start in range(0, total, chunk):
            count = min(chunk, total - start)
            signs = kernels.signs_from_index(start, count, n)
            yield Support(task, signs, np.full(count, w_unif), parity_character(signs, task.A))

    if w_corr is not None:
        free = np.array(task.off_A, dtype=np.int64)
        total = 1 << (n - k)
        for pattern in (1, -1):
            for start in range(0, total, chunk):
                count = min(chunk, total - start)
                signs = np.empty((count, n), dtype=np.int8)
                signs[:, list(task.A)] = pattern
                signs[:, free] = kernels.signs_from_index(start, count, n - k)
                # k odd, so the label equals the common sign of the A block
                labels = np.full(count, pattern, dtype=np.int8)
                yield Support(task, signs, np.full(count, w_corr), labels)


def enumerate_support(task: ParityTask, component="full-mixture", cap=DEFAULT_CAP) -> Support:
    parts = list(iter_support(task, component, cap))
    return Support(
        task,
        np.concatenate([p.signs for p in parts]),
        np.concatenate([p.weights for p in parts]),
        np.concatenate([p.labels for p in parts]),
    )


# --------------------------------------------------------------------------- expectation modes

EXACT = "exact"


@dataclass(frozen=True)
class MonteCarlo:
    """Monte-Carlo expectation with ``samples`` draws.

    ``seed`` is an int or a stream path tuple ``(seed, *keys)``; the same
    ``MonteCarlo`` value always reproduces the same draws.
    """

    samples: int
    seed: object = 0

    def __post_init__(self):
        if int(self.samples) < 1:
            raise InvalidInputError(f"Monte-Carlo needs at least one sample, got {self.samples}")

    def generator(self):
        if isinstance(self.seed, tuple):
            return stream(self.seed[0], *self.seed[1:])
        return as_generator(self.seed)


@dataclass
class Empirical:
    """A fixed weighted sample (defaults to uniform weights)."""

    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.weights is None:
            self.weights = np.full(len(self.y), 1.0 / len(self.y))


def batches(task: ParityTask, mode, cap=DEFAULT_CAP, component="full-mixture"):
    """Yield weighted ``(X, y, weights)`` triples whose weights sum to one."""
    if isinstance(mode, str):
        if mode != EXACT:
            raise InvalidInputError(f"unknown mode {mode!r}")
        for part in iter_support(task, component, cap):
            yield part.X, part.labels.astype(np.float64), part.weights
    elif isinstance(mode, MonteCarlo):
        gen = mode.generator()
        if component == "full-mixture":
            X, y = sample_batch(task, gen, int(mode.samples))
        elif component == "uniform-only":
            signs = sample_uniform_signs(task.n, gen, int(mode.samples))
            X, y = task.instances(signs), parity_character(signs, task.A).astype(np.float64)
        else:
            raise InvalidInputError("Monte-Carlo sampling of a single component other than uniform")
        yield X, y, np.full(len(y), 1.0 / len(y))
    elif isinstance(mode, Empirical):
        yield mode.X, mode.y, mode.weights
    else:
        raise InvalidInputError(f"unsupported mode {mode!r}")


def expectation(task, fn, mode=EXACT, component="full-mixture", cap=DEFAULT_CAP):
    """``E[fn(X, y)]`` where ``fn`` maps a batch to per-row values."""
    total = 0.0
    for X, y, w in batches(task, mode, cap, component):
        total += float(np.dot(w, fn(X, y)))
    return total


# --------------------------------------------------------------------------- Fourier audit


def fourier_correlation(fmap, feature_index, subset: Sequence[int], mode=EXACT, cap=DEFAULT_CAP):
    """``E_{x uniform}[chi_subset(x) * Psi_i(x)]``."""
    n = fmap.input_dim
    if not 0 <= feature_index < fmap.N:
        raise InvalidInputError(f"feature index {feature_index} out of range for N={fmap.N}")
    scale = 1.0 / math.sqrt(n)
    if isinstance(mode, MonteCarlo):
        parts = [sample_uniform_signs(n, mode.generator(), int(mode.samples))]
    elif mode == EXACT:
        _check_cap(n, cap)
        total = 1 << n
        parts = (
            kernels.signs_from_index(s, min(SUPPORT_CHUNK, total - s), n)
            for s in range(0, total, SUPPORT_CHUNK)
        )
    else:
        raise InvalidInputError(f"unsupported mode {mode!r}")
    acc, count = 0.0, 0
    for signs in parts:
        psi = fmap.embed(signs * scale)[:, feature_index]
        acc += float(np.dot(parity_character(signs, subset), psi))
        count += len(signs)
    return acc / count


@dataclass
class ParsevalReport:
    n: int
    sum_sq: np.ndarray
    norm_sq: np.ndarray
    deviation: np.ndarray
    max_deviation: float
    clamp_violations: list
    top_subset: np.ndarray

    def to_json(self):
        return {
            "n": self.n,
            "sum_sq": self.sum_sq.tolist(),
            "norm_sq": self.norm_sq.tolist(),
            "max_deviation": self.max_deviation,
            "clamp_violations": self.clamp_violations,
            "top_subset_mask": self.top_subset.tolist(),
        }


def parseval_audit(fmap, n, cap=AUDIT_CAP, tol=1e-12) -> ParsevalReport:
    """Full Walsh spectrum of every feature by plain enumeration.

    Subsets are indexed by bitmask in the same order as instances, so the
    character table is the Sylvester Hadamard matrix.  A feature is flagged
    when its squared 2-norm exceeds 1 (+tol) or any output leaves [-1, 1].
    """
    if fmap.input_dim != n:
        raise InvalidInputError(f"feature map expects n={fmap.input_dim}, audit asked for n={n}")
    _check_cap(n, cap)
    size = 1 << n
    signs = kernels.signs_from_index(0, size, n)
    psi = fmap.embed(signs / math.sqrt(n))
    chars = scipy.linalg.hadamard(size, dtype=np.float64)
    corr = chars @ psi / size
    sum_sq = np.sum(corr**2, axis=0)
    norm_sq = np.mean(psi**2, axis=0)
    deviation = np.abs(sum_sq - norm_sq)
    out_of_range = np.any(np.abs(psi) > 1.0, axis=0)
    flagged = np.flatnonzero((norm_sq > 1.0 + tol) | out_of_range).tolist()
    return ParsevalReport(
        n=n,
        sum_sq=sum_sq,
        norm_sq=norm_sq,
        deviation=deviation,
        max_deviation=float(deviation.max(initial=0.0)),
        clamp_violations=flagged,
        top_subset=np.argmax(corr**2, axis=0),
    )


# --------------------------------------------------------------------------- hardness


def hardness_bound(N, B, k, n=None):
    """Worst-case hinge loss over the family for any ``||w|| <= B`` linear model.

    Returns ``1/2 - sqrt(N) * B / (2^k * sqrt(2))``; negative values mean the
    bound is vacuous.  The guarantee needs ``k <= n/16``; pass ``n`` to get a
    warning when that does not hold.
    """
    if N < 1 or B < 0 or k < 1:
        raise InvalidInputError(f"need N >= 1, B >= 0, k >= 1 (got N={N}, B={B}, k={k})")
    if n is not None and k > n / 16:
        warnings.warn(
            f"k={k} > n/16={n / 16:g}: outside the regime where the bound is guaranteed",
            stacklevel=2,
        )
    return 0.5 - math.sqrt(N) * B / (2.0**k * math.sqrt(2.0))
