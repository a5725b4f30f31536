"""Empirical isometry checks over ordered-sampling signals and feasibility calculators.

A signal ``H = y^T kron S`` acts on the flattened measurement matrix as
``H b = S B y`` and has ``||H||_F^2 = m ||y||^2``. The checks sample random
signals (or signal pairs) and report the tight constant such that every
observed ratio ``||H b||^2 / ||H||_F^2`` lies in ``[1 - c, 1 + c]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import gammaln

from .altmin import target_agreements
from .core import (InvalidArgumentError, OrderedSelection, SeedLike, apply_selection,
                   as_rng, random_selection)

__all__ = [
    "SamplingFailureError",
    "RipReport",
    "FeasibilityInputs",
    "check_rip_H",
    "check_rrip",
    "example1_ratios",
    "feasibility_lhs",
    "oversampling_scale",
    "init_probability",
    "init_exponent",
    "entropy",
]

MatrixSource = Union[np.ndarray, Callable[[np.random.Generator], np.ndarray]]

# rejection sampling gives up when the acceptance rate drops below this
MIN_ACCEPTANCE = 1e-3


class SamplingFailureError(RuntimeError):
    """Rejection sampling accepted too few candidate pairs."""

    def __init__(self, accepted: int, proposed: int):
        self.accepted, self.proposed = accepted, proposed
        super().__init__(
            f"rejection sampling starved: accepted {accepted} of {proposed} proposals "
            f"(below {MIN_ACCEPTANCE:.1%}); mu is too demanding for this pair distribution")


@dataclass
class RipReport:
    """Sampled isometry ratios and the tight constant they imply.

    ``constant`` is ``epsilon_hat`` for single signals and ``delta_hat`` for
    pairs. Per-trial columns are kept for CSV export.
    """

    kind: str
    constant: float
    ratios: np.ndarray
    n: int
    m: int
    k: int
    mu: Optional[float] = None
    distances: Optional[np.ndarray] = None
    similarities: Optional[np.ndarray] = None
    norms: Optional[np.ndarray] = None
    proposals: Optional[int] = None

    @property
    def num_samples(self) -> int:
        return int(self.ratios.size)

    @property
    def epsilon_hat(self) -> float:
        return self.constant

    @property
    def delta_hat(self) -> float:
        return self.constant

    @property
    def mean_ratio(self) -> float:
        return float(self.ratios.mean())

    def violation_ratios(self, c: float) -> np.ndarray:
        """Ratios outside ``[1 - c, 1 + c]``."""
        return self.ratios[np.abs(self.ratios - 1.0) > c]

    def summary(self) -> dict:
        out = {"kind": self.kind, "constant": self.constant, "num_samples": self.num_samples,
               "mean_ratio": self.mean_ratio, "min_ratio": float(self.ratios.min()),
               "max_ratio": float(self.ratios.max()), "n": self.n, "m": self.m, "k": self.k}
        out["epsilon_hat" if self.kind == "H" else "delta_hat"] = self.constant
        if self.mu is not None:
            out["mu"] = self.mu
            out["proposals"] = self.proposals
        return out

    def rows(self):
        """Per-trial records ``(trial, ratio, d, nu, norm)``."""
        nan = np.full(self.num_samples, np.nan)
        d = self.distances if self.distances is not None else nan
        nu = self.similarities if self.similarities is not None else nan
        nrm = self.norms if self.norms is not None else nan
        for i in range(self.num_samples):
            yield i, float(self.ratios[i]), float(d[i]), float(nu[i]), float(nrm[i])


def _tight(ratios) -> float:
    return float(np.max(np.abs(np.asarray(ratios) - 1.0)))


def _matrix_source(B: MatrixSource, n: Optional[int] = None):
    """Return ``(draw, n, k)`` where ``draw(rng)`` yields the matrix for one trial."""
    if callable(B):
        probe = np.asarray(B(np.random.default_rng(0)))
        if probe.ndim != 2:
            raise InvalidArgumentError("matrix factory must return a 2-D array")
        return (lambda rng: np.asarray(B(rng), dtype=float)), probe.shape[0], probe.shape[1]
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        raise InvalidArgumentError("B must be an n x k matrix")
    return (lambda rng: B), B.shape[0], B.shape[1]


def _resolve_m(m, n):
    m = n if m is None else int(m)
    if not 1 <= m <= n:
        raise InvalidArgumentError(f"need 1 <= m <= n, got m={m}, n={n}")
    return m


def _check_trials(num_trials):
    if int(num_trials) < 1:
        raise InvalidArgumentError("num_trials must be positive")
    return int(num_trials)


def _streams(seed, count):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(count)]


def check_rip_H(B: MatrixSource, num_trials: int, seed: SeedLike = None,
                m: Optional[int] = None) -> RipReport:
    """Sample ``r = ||S B y||^2 / (m ||y||^2)`` over random ``(y, S)``.

    Parameters
    ----------
    B : ndarray or callable
        Fixed ``n x k`` matrix, or a factory ``rng -> ndarray`` drawing a fresh
        matrix per trial (ensemble average).
    num_trials : int
    seed : int, SeedSequence or None
        Each trial draws from its own spawned stream.
    m : int, optional
        Samples kept per signal; defaults to ``n``.
    """
    num_trials = _check_trials(num_trials)
    draw, n, k = _matrix_source(B)
    m = _resolve_m(m, n)
    ratios = np.empty(num_trials)
    norms = np.empty(num_trials)
    for t, rng in enumerate(_streams(seed, num_trials)):
        Bt = draw(rng)
        y = rng.standard_normal(k)
        s = random_selection(n, m, rng)
        v = Bt[s.indices] @ y
        ratios[t] = (v @ v) / (m * (y @ y))
        norms[t] = math.sqrt(m * (y @ y))
    return RipReport("H", _tight(ratios), ratios, n, m, k, norms=norms)


def _local_partner(y, s, rng, perturbation, move_row=True):
    """Nearby pair: ``y`` jittered at relative scale ``perturbation``, optionally one row moved."""
    k = y.size
    yp = y + perturbation * np.linalg.norm(y) / math.sqrt(k) * rng.standard_normal(k)
    if not move_row:
        return yp, s
    idx = s.indices.copy()
    n, m = s.n, s.m
    r = int(rng.integers(m))
    lo = idx[r - 1] + 1 if r > 0 else 0
    hi = idx[r + 1] - 1 if r < m - 1 else n - 1
    if hi > lo:
        idx[r] = int(rng.integers(lo, hi + 1))
    return yp, OrderedSelection(idx, n)


def check_rrip(B: MatrixSource, mu: float, num_trials: int, seed: SeedLike = None,
               m: Optional[int] = None, perturbation: Optional[float] = None,
               region: str = "included", move_row: bool = True) -> RipReport:
    """Sample ``||S B y - S' B y'||^2 / d^2`` over pairs with ``d >= mu * max norm``.

    Pairs are proposed independently (both signals uniform) or, with
    ``perturbation`` set, as local pairs around a random signal (the partner
    also moves one selected row unless ``move_row`` is false). Proposals
    failing the distance condition are rejected; ``region="excluded"`` keeps
    only the rejected side instead, which is where the ratio fails to
    concentrate.

    Raises
    ------
    SamplingFailureError
        When fewer than 0.1% of proposals are accepted.
    """
    if not 0.0 < mu <= 1.0:
        raise InvalidArgumentError(f"mu must lie in (0, 1], got {mu}")
    if region not in ("included", "excluded"):
        raise InvalidArgumentError("region must be 'included' or 'excluded'")
    if perturbation is not None and not perturbation >= 0:
        raise InvalidArgumentError("perturbation must be non-negative")
    num_trials = _check_trials(num_trials)
    draw, n, k = _matrix_source(B)
    m = _resolve_m(m, n)
    max_proposals = int(math.ceil(num_trials / MIN_ACCEPTANCE))
    ratios, dists, sims, norms = [], [], [], []
    proposals = 0
    rngs = _streams(seed, num_trials)
    for rng in rngs:
        while True:
            if proposals >= max_proposals:
                raise SamplingFailureError(len(ratios), proposals)
            proposals += 1
            y = rng.standard_normal(k)
            s = random_selection(n, m, rng)
            if perturbation is None:
                yp = rng.standard_normal(k)
                sp = random_selection(n, m, rng)
            else:
                yp, sp = _local_partner(y, s, rng, perturbation, move_row)
            agree = int(np.count_nonzero(s.indices == sp.indices))
            d2 = m * (y @ y) + m * (yp @ yp) - 2.0 * agree * (y @ yp)
            d = math.sqrt(max(d2, 0.0))
            big = math.sqrt(m) * max(np.linalg.norm(y), np.linalg.norm(yp))
            keep = d >= mu * big
            if region == "excluded":
                keep = (not keep) and d > 0
            if keep:
                break
        Bt = draw(rng)
        diff = Bt[s.indices] @ y - Bt[sp.indices] @ yp
        ratios.append((diff @ diff) / (d * d))
        dists.append(d)
        sims.append(agree / m)
        norms.append(big)
    if proposals and len(ratios) / proposals < MIN_ACCEPTANCE:
        raise SamplingFailureError(len(ratios), proposals)
    r = np.array(ratios)
    return RipReport("HH" if region == "included" else "HH-excluded", _tight(r), r, n, m, k,
                     mu=float(mu), distances=np.array(dists), similarities=np.array(sims),
                     norms=np.array(norms), proposals=proposals)


def example1_ratios(n: int, m: int, k: int, num_draws: int, seed: SeedLike = None
                    ) -> np.ndarray:
    """Ratios for the adversarial pair ``y' = y`` with ``S, S'`` differing in the last row.

    A fresh Gaussian ``B`` is drawn for every sample. Here ``d^2 = 2 ||y||^2``
    and the ratio is ``(b_i . y - b_j . y)^2 / (2 ||y||^2)``, which is
    distributed as chi-squared with one degree of freedom whatever ``m`` is.
    """
    if not 1 <= m < n or k < 1:
        raise InvalidArgumentError("need 1 <= m < n and k >= 1")
    out = np.empty(_check_trials(num_draws))
    for t, rng in enumerate(_streams(seed, out.size)):
        B = rng.standard_normal((n, k))
        y = rng.standard_normal(k)
        # S keeps rows 0..m-1; S' replaces the last one with a later row
        last_alt = int(rng.integers(m, n))
        diff = (B[m - 1] - B[last_alt]) @ y
        out[t] = diff * diff / (2.0 * (y @ y))
    return out


def entropy(theta):
    """Natural-log binary entropy, 0 at the endpoints."""
    th = np.asarray(theta, dtype=float)
    if np.any((th < 0) | (th > 1)) or np.any(np.isnan(th)):
        raise InvalidArgumentError("theta must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -th * np.log(th) - (1 - th) * np.log1p(-th)
    h = np.where((th == 0) | (th == 1), 0.0, h)
    return float(h) if np.ndim(h) == 0 else h


@dataclass(frozen=True)
class FeasibilityInputs:
    kappa: float
    theta: float
    delta: float
    mu: float
    c: float = 1.0

    def __post_init__(self):
        for name in ("kappa", "theta", "delta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InvalidArgumentError(f"{name} must lie in (0, 1), got {v}")
        if not 0.0 < self.mu <= 1.0:
            raise InvalidArgumentError(f"mu must lie in (0, 1], got {self.mu}")
        if not self.c > 0:
            raise InvalidArgumentError(f"c must be positive, got {self.c}")


def feasibility_lhs(inp: FeasibilityInputs) -> float:
    """``kappa log(1 + 2/delta) + h(theta) - c delta^2 mu^2 (1 - theta) / 2``.

    Negative values indicate the relaxed isometry holds asymptotically. The
    constant ``c`` is not known in closed form, so absolute feasibility
    regions depend on the value supplied.
    """
    return (inp.kappa * math.log1p(2.0 / inp.delta) + entropy(inp.theta)
            - inp.c * inp.delta ** 2 * inp.mu ** 2 * (1.0 - inp.theta) / 2.0)


def oversampling_scale(delta: float, mu: float, c: float = 1.0) -> float:
    """Approximate ``n / k`` needed: ``2 log(1 + 2/delta) / (c delta^2 mu^2)``."""
    if not 0.0 < delta < 1.0:
        raise InvalidArgumentError(f"delta must lie in (0, 1), got {delta}")
    if not 0.0 < mu <= 1.0:
        raise InvalidArgumentError(f"mu must lie in (0, 1], got {mu}")
    if not c > 0:
        raise InvalidArgumentError(f"c must be positive, got {c}")
    return 2.0 * math.log1p(2.0 / delta) / (c * delta ** 2 * mu ** 2)


def _log_binom(a, b):
    return gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1)


def init_probability(n: int, m: int, gamma: float, log: bool = False) -> float:
    """Chance that a uniform selection agrees with ``first m rows`` on >= ``ceil(m gamma)`` rows.

    Equals ``C(n - q, m - q) / C(n, m)``: agreements with the leading
    selection form a prefix, so ``q`` agreements pin the first ``q`` rows.
    """
    if not 0 <= m <= n:
        raise InvalidArgumentError(f"need 0 <= m <= n, got m={m}, n={n}")
    if not 0.0 <= gamma <= 1.0:
        raise InvalidArgumentError("gamma must lie in [0, 1]")
    q = target_agreements(gamma, m) if m else 0
    lp = float(_log_binom(n - q, m - q) - _log_binom(n, m))
    return lp if log else math.exp(lp)


def init_exponent(rho: float, gamma: float) -> float:
    """``h(rho) - (1 - rho gamma) h((rho - rho gamma) / (1 - rho gamma))``."""
    if not 0.0 < rho < 1.0:
        raise InvalidArgumentError("rho must lie in (0, 1)")
    if not 0.0 <= gamma <= 1.0:
        raise InvalidArgumentError("gamma must lie in [0, 1]")
    rg = rho * gamma
    return entropy(rho) - (1.0 - rg) * entropy((rho - rg) / (1.0 - rg))
