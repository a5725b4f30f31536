"""Domain types, metrics and random instance generation for unlabeled ordered sampling.

An ordered selection keeps ``m`` of ``n`` entries of a vector without changing
their relative order. Internally indices are 0-based; the ``one_based`` helpers
translate at serialization boundaries, where indices follow the usual
mathematical convention ``1 <= i_1 < ... < i_m <= n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "InvalidArgumentError",
    "OrderedSelection",
    "UosInstance",
    "SignalPair",
    "as_rng",
    "gaussian_matrix",
    "random_selection",
    "apply_selection",
    "lift_up",
    "similarity",
    "signal_distance",
    "cost",
    "make_instance",
    "parse_snr",
    "agreement_count",
]

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


class InvalidArgumentError(ValueError):
    """Raised when an argument violates a documented precondition."""


def as_rng(seed: SeedLike) -> np.random.Generator:
    """Return a Generator; an existing Generator is passed through untouched."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class OrderedSelection:
    """A strictly increasing set of ``m`` indices into ``range(n)``.

    Equivalent to an ``m x n`` 0-1 selection matrix (or its transpose, the
    lift-up operator), but never materialized as a matrix.
    """

    indices: np.ndarray
    n: int

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 1:
            raise InvalidArgumentError("indices must be one-dimensional")
        if idx.size and not np.issubdtype(idx.dtype, np.integer):
            if not np.all(np.equal(np.mod(idx, 1), 0)):
                raise InvalidArgumentError("indices must be integers")
        idx = idx.astype(np.int64)
        n = int(self.n)
        if idx.size > n:
            raise InvalidArgumentError(f"cannot select m={idx.size} of n={n} entries")
        if idx.size and (idx[0] < 0 or idx[-1] >= n):
            raise InvalidArgumentError(f"indices must lie in [0, {n})")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise InvalidArgumentError("indices must be strictly increasing")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "n", n)

    @property
    def m(self) -> int:
        return int(self.indices.size)

    @classmethod
    def full(cls, n: int) -> "OrderedSelection":
        return cls(np.arange(n), n)

    @classmethod
    def from_one_based(cls, indices: Sequence[int], n: int) -> "OrderedSelection":
        return cls(np.asarray(indices, dtype=np.int64) - 1, n)

    def one_based(self) -> list[int]:
        return [int(i) + 1 for i in self.indices]

    def to_matrix(self) -> np.ndarray:
        """Dense 0-1 matrix; intended for tests and small examples only."""
        S = np.zeros((self.m, self.n))
        S[np.arange(self.m), self.indices] = 1.0
        return S

    def __eq__(self, other):
        if not isinstance(other, OrderedSelection):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash((self.n, self.indices.tobytes()))

    def __repr__(self):
        return f"OrderedSelection(n={self.n}, indices={self.one_based()} [1-based])"


@dataclass(frozen=True, eq=False)
class UosInstance:
    """Measurement matrix, ground truth and the noisy unlabeled samples.

    ``x = apply_selection(s_true, B @ y_true) + w``. ``snr`` is the realized
    ratio ``||S B y||^2 / ||w||^2`` (``inf`` for noiseless instances).
    """

    B: np.ndarray
    y_true: np.ndarray
    s_true: OrderedSelection
    w: np.ndarray
    x: np.ndarray
    snr: float
    noise_norm: float = field(default=float("nan"))

    def __post_init__(self):
        for name in ("B", "y_true", "w", "x"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n, k = self.B.shape
        if self.y_true.shape != (k,):
            raise InvalidArgumentError("y_true must have length k = B.shape[1]")
        if self.s_true.n != n:
            raise InvalidArgumentError("s_true.n must equal B.shape[0]")
        m = self.s_true.m
        if self.w.shape != (m,) or self.x.shape != (m,):
            raise InvalidArgumentError("w and x must have length m")
        if math.isnan(self.noise_norm):
            object.__setattr__(self, "noise_norm", float(np.linalg.norm(self.w)))

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.s_true.m

    @property
    def clean(self) -> np.ndarray:
        """Noise-free samples ``S B y``."""
        return apply_selection(self.s_true, self.B @ self.y_true)

    @classmethod
    def from_observations(cls, B, x, noise_norm: float) -> "UosInstance":
        """Wrap external data where the truth is unknown.

        Ground-truth fields are filled with placeholders (``y_true = 0``,
        ``s_true`` = first ``m`` rows); only ``B``, ``x`` and ``noise_norm``
        are meaningful.
        """
        B = np.asarray(B, dtype=float)
        x = np.asarray(x, dtype=float)
        n, k = B.shape
        m = x.size
        if not k <= m <= n:
            raise InvalidArgumentError("need k <= m <= n")
        return cls(B, np.zeros(k), OrderedSelection(np.arange(m), n),
                   np.zeros(m), x, float("nan"), float(noise_norm))


@dataclass(frozen=True)
class SignalPair:
    """Two signals ``(y, S)`` and ``(y', S')`` of identical shape."""

    y: np.ndarray
    s: OrderedSelection
    y_prime: np.ndarray
    s_prime: OrderedSelection

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        yp = np.asarray(self.y_prime, dtype=float)
        if y.shape != yp.shape or y.ndim != 1:
            raise InvalidArgumentError("y and y' must be vectors of equal length")
        if (self.s.m, self.s.n) != (self.s_prime.m, self.s_prime.n):
            raise InvalidArgumentError("selections must share (m, n)")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_prime", yp)


def gaussian_matrix(n: int, k: int, seed: SeedLike = None) -> np.ndarray:
    """``n x k`` matrix with i.i.d. N(0, 1) entries."""
    if n < 1 or k < 1:
        raise InvalidArgumentError(f"dimensions must be positive, got ({n}, {k})")
    return as_rng(seed).standard_normal((n, k))


def random_selection(n: int, m: int, seed: SeedLike = None) -> OrderedSelection:
    """Uniform draw over all C(n, m) ordered selections."""
    if not 0 <= m <= n:
        raise InvalidArgumentError(f"need 0 <= m <= n, got m={m}, n={n}")
    # Generator.choice without replacement is an exact partial shuffle
    picked = as_rng(seed).choice(n, size=m, replace=False)
    return OrderedSelection(np.sort(picked), n)


def apply_selection(s: OrderedSelection, v) -> np.ndarray:
    """Subvector of ``v`` at the selected indices, in order."""
    v = np.asarray(v)
    if v.shape[0] != s.n:
        raise InvalidArgumentError(f"vector has length {v.shape[0]}, selection expects {s.n}")
    return v[s.indices]


def lift_up(s: OrderedSelection, x) -> np.ndarray:
    """Embed an m-vector into n dimensions at the selected indices, zeros elsewhere."""
    x = np.asarray(x, dtype=float)
    if x.shape != (s.m,):
        raise InvalidArgumentError(f"vector has length {x.shape[0]}, selection keeps {s.m}")
    out = np.zeros(s.n)
    out[s.indices] = x
    return out


def _check_same_shape(s: OrderedSelection, s_prime: OrderedSelection):
    if (s.m, s.n) != (s_prime.m, s_prime.n):
        raise InvalidArgumentError(
            f"selections differ in shape: (m={s.m}, n={s.n}) vs (m={s_prime.m}, n={s_prime.n})")


def agreement_count(s: OrderedSelection, s_prime: OrderedSelection) -> int:
    """Number of positions where both selections pick the same index."""
    _check_same_shape(s, s_prime)
    return int(np.count_nonzero(s.indices == s_prime.indices))


def similarity(s: OrderedSelection, s_prime: OrderedSelection) -> float:
    """Fraction of matching rows, ``tr(S^T S') / m``."""
    _check_same_shape(s, s_prime)
    if s.m == 0:
        raise InvalidArgumentError("similarity is undefined for m = 0")
    return agreement_count(s, s_prime) / s.m


def signal_distance(p: SignalPair) -> float:
    """Frobenius distance between ``y^T kron S`` and ``y'^T kron S'``."""
    m = p.s.m
    nu = similarity(p.s, p.s_prime)
    d2 = m * (p.y @ p.y) + m * (p.y_prime @ p.y_prime) - 2.0 * m * nu * (p.y @ p.y_prime)
    return math.sqrt(max(d2, 0.0))


def _check_instance_dims(s: OrderedSelection, y, inst: UosInstance):
    if s.n != inst.n or s.m != inst.m:
        raise InvalidArgumentError(
            f"selection (m={s.m}, n={s.n}) does not match instance (m={inst.m}, n={inst.n})")
    if np.shape(y) != (inst.k,):
        raise InvalidArgumentError(f"signal must have length k={inst.k}")


def cost(s: OrderedSelection, y, inst: UosInstance) -> float:
    """Squared residual ``||x - S B y||^2``."""
    y = np.asarray(y, dtype=float)
    _check_instance_dims(s, y, inst)
    r = inst.x - inst.B[s.indices] @ y
    return float(r @ r)


def parse_snr(snr_db) -> float:
    """Linear SNR from decibels; ``"noiseless"``/``None``/``inf`` give ``inf``."""
    if snr_db is None:
        return math.inf
    if isinstance(snr_db, str):
        if snr_db.strip().lower() in ("noiseless", "inf", "none"):
            return math.inf
        try:
            snr_db = float(snr_db)
        except ValueError:
            raise InvalidArgumentError(f"cannot parse SNR {snr_db!r}") from None
    snr_db = float(snr_db)
    if math.isinf(snr_db) and snr_db > 0:
        return math.inf
    if math.isnan(snr_db) or math.isinf(snr_db):
        raise InvalidArgumentError(f"invalid SNR {snr_db}")
    return 10.0 ** (snr_db / 10.0)


def make_instance(n: int, m: int, k: int, snr_db="noiseless", seed: SeedLike = None,
                  B: np.ndarray | None = None) -> UosInstance:
    """Draw a random instance.

    ``B`` defaults to a Gaussian matrix; the signal is standard Gaussian and the
    true selection is uniform. Noise is rescaled so that the realized SNR equals
    the target exactly.
    """
    if not (1 <= k <= m <= n):
        if k > m:
            raise InvalidArgumentError("k must not exceed m")
        raise InvalidArgumentError(f"need 1 <= k <= m <= n, got n={n}, m={m}, k={k}")
    snr = parse_snr(snr_db)
    rng = as_rng(seed)
    if B is None:
        B = gaussian_matrix(n, k, rng)
    elif B.shape != (n, k):
        raise InvalidArgumentError(f"B has shape {B.shape}, expected ({n}, {k})")
    y = rng.standard_normal(k)
    s = random_selection(n, m, rng)
    clean = apply_selection(s, B @ y)
    if math.isinf(snr):
        w = np.zeros(m)
    else:
        w = rng.standard_normal(m)
        w *= np.linalg.norm(clean) / (np.linalg.norm(w) * math.sqrt(snr))
    inst = UosInstance(B, y, s, w, clean + w, snr)
    return inst
