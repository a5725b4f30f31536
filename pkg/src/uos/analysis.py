"""Fixed-point analysis of the alternating minimization similarity map.

Everything is expressed in the rescaled parameters

    varsigma = sqrt((1 + delta) / (1 - delta)) >= 1
    varrho   = 2 * zeta / sqrt(1 - delta)      in [0, 1)

where ``delta`` is the relaxed isometry constant and ``zeta`` the normalized
noise level. The central object is the lower envelope ``F0(nu)`` of the set of
similarities reachable in one iteration from similarity ``nu``; its fixed
points ``nu_min`` (repelling) and ``nu_max`` (attracting) govern convergence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import bisect

from .core import InvalidArgumentError

__all__ = [
    "ConditionViolatedError",
    "OutOfRegimeError",
    "FixedPointParams",
    "EnvelopeCurve",
    "EvolutionTrace",
    "NoiselessFixedPoints",
    "NoisyFixedPoints",
    "varpi",
    "nu0",
    "theta_roots",
    "raw_envelope",
    "envelope",
    "envelope_curve",
    "f_max",
    "nu1",
    "noiseless_fixed_points",
    "upsilon",
    "upsilon_sufficient",
    "noisy_fixed_points",
    "evolve",
    "empirical_trace",
    "decoding_radius",
    "DecodingRadius",
]

# below this theta_min the corner formula is a 0/0 form; F tends to -inf there
THETA_CUTOFF = 1e-9
UPSILON_GRID = 10_000


class ConditionViolatedError(ValueError):
    """``varrho >= 1``: no similarity threshold ``nu0`` exists."""


class OutOfRegimeError(ValueError):
    """Parameters lie outside the range where a result is defined."""


@dataclass(frozen=True)
class FixedPointParams:
    varsigma: float
    varrho: float
    delta: Optional[float] = None
    zeta: Optional[float] = None

    def __post_init__(self):
        if not self.varsigma >= 1.0:
            raise InvalidArgumentError(f"varsigma must be >= 1, got {self.varsigma}")
        if not self.varrho >= 0.0:
            raise InvalidArgumentError(f"varrho must be >= 0, got {self.varrho}")

    @classmethod
    def from_delta(cls, delta: float, snr: float = math.inf, epsilon: float = 0.0,
                   ) -> "FixedPointParams":
        """Build from the isometry constants and the linear SNR.

        The noise level is taken at its bound ``zeta = 1 / sqrt(snr (1 - eps))``.
        """
        if not 0.0 <= delta < 1.0:
            raise InvalidArgumentError(f"delta must lie in [0, 1), got {delta}")
        if not 0.0 <= epsilon < 1.0:
            raise InvalidArgumentError(f"epsilon must lie in [0, 1), got {epsilon}")
        if not snr > 0:
            raise InvalidArgumentError("snr must be positive")
        zeta = 0.0 if math.isinf(snr) else 1.0 / math.sqrt(snr * (1.0 - epsilon))
        return cls(math.sqrt((1 + delta) / (1 - delta)), 2 * zeta / math.sqrt(1 - delta),
                   delta, zeta)

    @property
    def condition_holds(self) -> bool:
        return self.varrho < 1.0

    def require_condition(self):
        if not self.condition_holds:
            raise ConditionViolatedError(
                f"Condition 1 violated: varrho = {self.varrho:.6g} must be < 1 "
                "(noise too large relative to the isometry constant)")


def _nu_array(nu):
    arr = np.asarray(nu, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or np.any(np.isnan(arr)):
        raise InvalidArgumentError("nu must lie in [0, 1]")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def varpi(nu, params: FixedPointParams):
    """``varsigma * sqrt(1 - nu^2) + varrho``."""
    nu = _nu_array(nu)
    return _out(params.varsigma * np.sqrt(1.0 - nu * nu) + params.varrho)


def nu0(params: FixedPointParams) -> float:
    """Smallest ``nu`` beyond which ``varpi(nu) < 1``."""
    params.require_condition()
    r = (1.0 - params.varrho) / params.varsigma
    return math.sqrt(max(0.0, 1.0 - r * r))


def _discriminant(nu, params):
    # expanded form, non-negative by construction
    c = np.sqrt(1.0 - nu * nu)
    s, r = params.varsigma, params.varrho
    return (s * s - 1.0) * c * c + r * r + 2.0 * r * s * c


def theta_roots(nu, params: FixedPointParams):
    """Roots ``(theta_min, theta_max)`` of ``t^2 - 2 t nu + 1 - varpi(nu)^2``."""
    nu = _nu_array(nu)
    root = np.sqrt(_discriminant(nu, params))
    return _out(nu - root), _out(nu + root)


def _corner_value(theta_min, params):
    """Objective at the corner ``(xi, theta) = (theta_min^2, theta_min)``."""
    s, r = params.varsigma, params.varrho
    u = 1.0 - theta_min
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 1.0 + (u * u - (s * u + r) ** 2) / (2.0 * theta_min)
    return np.where(theta_min > THETA_CUTOFF, val, -np.inf)


def raw_envelope(nu, params: FixedPointParams):
    """Corner-point value ``F(nu)`` (may be negative; ``-inf`` at or below ``nu0``)."""
    nu = _nu_array(nu)
    params.require_condition()
    t_min, _ = theta_roots(nu, params)
    above = nu > nu0(params)
    return _out(np.where(above, _corner_value(np.asarray(t_min), params), -np.inf))


def envelope(nu, params: FixedPointParams):
    """Lower envelope ``F0(nu)``: 0 on ``[0, nu0]``, ``max(F(nu), 0)`` above."""
    return _out(np.maximum(np.asarray(raw_envelope(nu, params)), 0.0))


def f_max(params: FixedPointParams) -> float:
    """Upper bound of ``F0``; equals the corner value at ``nu = 1``."""
    params.require_condition()
    s, r = params.varsigma, params.varrho
    return 1.0 + (1.0 - (1.0 + s) ** 2) / 2.0 * r * r / (1.0 - r)


def nu1(params: FixedPointParams) -> Optional[float]:
    """Smallest ``nu`` with ``F(nu) > 0``, or ``None`` when ``F_max <= 0``."""
    lo = nu0(params)
    if f_max(params) <= 0:
        return None
    if raw_envelope(lo, params) > 0:
        return lo
    g = lambda v: float(raw_envelope(v, params))
    # F is increasing on (nu0, 1]; push the left end off the -inf region
    a = lo + (1.0 - lo) * 1e-12 if lo < 1 else lo
    while g(a) == -np.inf and a < 1.0:
        a = a + (1.0 - a) * 1e-3
    if g(a) > 0:
        return a
    return bisect(lambda v: g(v), a, 1.0, xtol=1e-14, rtol=4 * np.finfo(float).eps)


@dataclass
class EnvelopeCurve:
    nu: np.ndarray
    f0: np.ndarray
    nu0: float
    nu1: Optional[float]
    f_max: float
    nu_min: Optional[float] = None
    nu_max: Optional[float] = None


def envelope_curve(params: FixedPointParams, num: int = 1001) -> EnvelopeCurve:
    grid = np.linspace(0.0, 1.0, num)
    fp = fixed_points(params)
    return EnvelopeCurve(grid, np.asarray(envelope(grid, params)), nu0(params), nu1(params),
                         f_max(params), fp[0] if fp else None, fp[1] if fp else None)


@dataclass(frozen=True)
class NoiselessFixedPoints:
    nu_min: float
    nu_max: float
    alpha_min: float
    closed_form: float
    closed_form_printed: float

    @property
    def closed_form_discrepancy(self) -> float:
        """Gap between the root and the formula with a ``+`` in the denominator."""
        return abs(self.closed_form_printed - self.nu_min)


def noiseless_fixed_points(varsigma: float) -> NoiselessFixedPoints:
    """Fixed points of ``F0`` when ``varrho = 0``.

    ``nu_max = 1``; ``nu_min = sin(alpha_min)`` where ``alpha_min`` is the
    nontrivial root of ``sin(a) + (1 - sqrt(varsigma^2 - 1)) cos(a) = 1``,
    found by bisection. The root is cross-checked against
    ``cos(2 beta)`` with ``tan(beta) = 1 - sqrt(varsigma^2 - 1)``, i.e.
    ``(1 - s^2 + 2 r) / (1 + s^2 - 2 r)`` with ``r = sqrt(s^2 - 1)``.
    ``closed_form_printed`` evaluates the variant with ``+ 2 r`` in the
    denominator, which disagrees with the root (e.g. 1/5 instead of 1 at
    ``varsigma = sqrt(2)``).
    """
    if not 1.0 < varsigma <= math.sqrt(2.0) * (1 + 1e-15):
        raise OutOfRegimeError(f"varsigma must lie in (1, sqrt(2)], got {varsigma}")
    root = math.sqrt(max(varsigma * varsigma - 1.0, 0.0))
    t = 1.0 - root
    closed = (1 - varsigma ** 2 + 2 * root) / (1 + varsigma ** 2 - 2 * root)
    printed = (1 - varsigma ** 2 + 2 * root) / (1 + varsigma ** 2 + 2 * root)
    if t <= 0.0:
        # tan(beta) = 0: the two fixed points merge at nu = 1
        return NoiselessFixedPoints(1.0, 1.0, math.pi / 2, closed, printed)
    g = lambda a: math.sin(a) + t * math.cos(a) - 1.0
    # g < 0 at 0, peaks at atan(1/t) with value sqrt(1 + t^2) - 1 > 0
    a_peak = math.atan2(1.0, t)
    alpha = bisect(g, 0.0, a_peak, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return NoiselessFixedPoints(math.sin(alpha), 1.0, alpha, closed, printed)


def upsilon(alpha, params: FixedPointParams):
    """Fixed-point residual in the angle ``alpha`` with ``nu = sin(alpha)``.

    Positive poles at both ends of ``(0, pi/2)`` when ``varrho > 0``; its roots
    are the fixed points of ``F0``.
    """
    a = np.asarray(alpha, dtype=float)
    if np.any(a <= 0) or np.any(a >= math.pi / 2):
        raise InvalidArgumentError("alpha must lie strictly inside (0, pi/2)")
    s, r = params.varsigma, params.varrho
    c, sn = np.cos(a), np.sin(a)
    gap = c + sn - 1.0
    return _out(((s - 1.0) * c + r) / gap - gap / ((s + 1.0) * c + r))


def upsilon_sufficient(params: FixedPointParams) -> bool:
    """Closed-form sufficient test for two fixed points (``upsilon(pi/4) < 0``)."""
    return params.varsigma + params.varrho * math.sqrt(2.0) < math.sqrt(7.0 - 4.0 * math.sqrt(2.0))


@dataclass(frozen=True)
class NoisyFixedPoints:
    alpha_min: float
    alpha_max: float

    @property
    def nu_min(self) -> float:
        return math.sin(self.alpha_min)

    @property
    def nu_max(self) -> float:
        return math.sin(self.alpha_max)


def sign_changes(values) -> np.ndarray:
    """Indices ``i`` where ``values[i]`` and ``values[i+1]`` have opposite signs."""
    sg = np.sign(values)
    return np.flatnonzero(sg[:-1] * sg[1:] < 0)


def noisy_fixed_points(params: FixedPointParams, grid_points: int = UPSILON_GRID,
                       xtol: float = 1e-10) -> Optional[NoisyFixedPoints]:
    """Both roots of ``upsilon``, or ``None`` when fewer than two exist.

    Sign changes are located on a uniform grid over ``(0, pi/2)``; each bracket
    is refined by bisection to ``xtol`` in ``alpha``. If the grid shows no sign
    change but its minimum sits next to an endpoint, the grid is refined
    geometrically toward that endpoint, where the roots crowd as
    ``(varsigma, varrho) -> (1, 0)``.
    """
    if params.varrho <= 0.0:
        raise OutOfRegimeError("noisy_fixed_points needs varrho > 0; use noiseless_fixed_points")
    if params.varrho >= 1.0 or params.varsigma <= 1.0:
        return None
    half = math.pi / 2
    step = half / grid_points
    a = (np.arange(grid_points) + 0.5) * step
    # geometric refinement near both poles
    tail = step * np.logspace(-12, 0, 200, endpoint=False)
    a = np.unique(np.concatenate([tail, a, half - tail]))
    u = np.asarray(upsilon(a, params))
    idx = sign_changes(u)
    if idx.size < 2:
        return None
    f = lambda t: float(upsilon(t, params))
    lo = bisect(f, a[idx[0]], a[idx[0] + 1], xtol=xtol)
    hi = bisect(f, a[idx[-1]], a[idx[-1] + 1], xtol=xtol)
    return NoisyFixedPoints(lo, hi)


def fixed_points(params: FixedPointParams) -> Optional[tuple[float, float]]:
    """``(nu_min, nu_max)`` for either regime, ``None`` when they do not exist."""
    if params.varrho == 0.0:
        if not 1.0 < params.varsigma <= math.sqrt(2.0):
            return None
        fp = noiseless_fixed_points(params.varsigma)
        return fp.nu_min, fp.nu_max
    fp = noisy_fixed_points(params)
    return (fp.nu_min, fp.nu_max) if fp else None


@dataclass
class EvolutionTrace:
    nu: np.ndarray
    mode: str = "analytic"
    xi: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None

    @property
    def limit(self) -> float:
        return float(self.nu[-1])


def evolve(params: FixedPointParams, nu_init: float, steps: int = 200,
           tol: float = 0.0) -> EvolutionTrace:
    """Iterate ``nu <- F0(nu)`` from ``nu_init``.

    With ``tol > 0`` iteration stops early once consecutive values differ by
    at most ``tol``.
    """
    if not 0.0 <= nu_init <= 1.0:
        raise InvalidArgumentError("nu_init must lie in [0, 1]")
    out = [float(nu_init)]
    for _ in range(steps):
        nxt = float(envelope(out[-1], params))
        out.append(nxt)
        if tol > 0 and abs(out[-1] - out[-2]) <= tol:
            break
    return EvolutionTrace(np.array(out))


def empirical_trace(report) -> EvolutionTrace:
    """Similarity, energy and correlation recorded along an AltMin run."""
    states = [st for st in report.trace if st.nu_true is not None]
    return EvolutionTrace(np.array([st.nu_true for st in states]), "empirical",
                          np.array([st.xi for st in states]),
                          np.array([st.theta for st in states]))


@dataclass(frozen=True)
class DecodingRadius:
    chi: float
    chi_near: float
    chi_far: float
    radius_factor: float
    radius_factor_approx: float


def decoding_radius(epsilon: float, delta: float, mu: float, snr: float,
                    eta: float = 1.0) -> DecodingRadius:
    """Relative error bound ``chi`` for a feasible estimate, and the neighbourhood radius.

    ``chi = max(mu sqrt((1+eps)/(1-eps)) (1 + (eta+1)/sqrt(snr)),
    (eta+1) / sqrt(snr (1 - 2 delta)))``; ``eta = 1`` gives the bound for the
    exact least-squares estimate. ``radius_factor`` is the multiple of
    ``||H_true||_F`` inside which the relaxed isometry may fail,
    ``mu * 2 / sqrt(1 - 2 eps) * (1 + 1/sqrt(snr))``, which tends to ``2 mu``
    (``radius_factor_approx``) for large SNR and small ``eps``.
    """
    if not 0 < epsilon < 0.5:
        raise InvalidArgumentError("epsilon must lie in (0, 1/2)")
    if not 0 < delta < 0.5:
        raise InvalidArgumentError("delta must lie in (0, 1/2)")
    if not 0 < mu <= 1:
        raise InvalidArgumentError("mu must lie in (0, 1]")
    if not snr > 0:
        raise InvalidArgumentError("snr must be positive")
    if eta < 1:
        raise InvalidArgumentError("eta must be >= 1")
    inv = 0.0 if math.isinf(snr) else 1.0 / math.sqrt(snr)
    near = mu * math.sqrt((1 + epsilon) / (1 - epsilon)) * (1 + (eta + 1) * inv)
    far = (eta + 1) * inv / math.sqrt(1 - 2 * delta)
    factor = mu * 2.0 / math.sqrt(1 - 2 * epsilon) * (1 + inv)
    return DecodingRadius(max(near, far), near, far, factor, 2.0 * mu)
