"""Alternating minimization over (selection, signal) with restarts and certification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .core import (InvalidArgumentError, OrderedSelection, SeedLike, UosInstance,
                   agreement_count, as_rng, random_selection, similarity)
from .matching import project_selection

__all__ = [
    "SingularSystemError",
    "InfeasibleInitError",
    "AltMinConfig",
    "AltMinState",
    "SolveReport",
    "project_signal",
    "altmin_solve",
    "certify",
    "solve_with_restarts",
    "genie_init",
    "target_agreements",
]

FIXED_POINT = "selection-fixed-point"
COST_STALL = "cost-stall"
MAX_ITER = "max-iter"
SINGULAR = "singular-system"


class SingularSystemError(ArithmeticError):
    """The selected rows of B do not have full column rank."""

    def __init__(self, rank: int, k: int):
        super().__init__(f"selected rows of B have rank {rank} < k = {k}")
        self.rank = rank
        self.k = k


class InfeasibleInitError(RuntimeError):
    """No selection with the requested number of agreements exists."""


@dataclass(frozen=True)
class AltMinConfig:
    max_iter: int = 100
    cost_tol: float = 1e-10

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidArgumentError("max_iter must be at least 1")
        if self.cost_tol < 0:
            raise InvalidArgumentError("cost_tol must be non-negative")


@dataclass(frozen=True)
class AltMinState:
    """One iteration ``t``: selection ``S^t``, its least-squares signal ``y^t``.

    ``cost`` is ``f(S^t, y^t)``; ``cost_after_selection`` is ``f(S^{t+1}, y^t)``
    once the selection step has run. ``nu_true``, ``xi`` and ``theta`` are only
    filled in when the ground truth is known.
    """

    iteration: int
    s: OrderedSelection
    y: np.ndarray
    cost: float
    cost_after_selection: float = math.nan
    nu_true: Optional[float] = None
    xi: Optional[float] = None
    theta: Optional[float] = None


@dataclass
class SolveReport:
    state: AltMinState
    iterations: int
    termination: str
    residual: float
    certified: bool = False
    restarts: int = 1
    trace: list[AltMinState] = field(default_factory=list)

    @property
    def y(self) -> np.ndarray:
        return self.state.y

    @property
    def s(self) -> OrderedSelection:
        return self.state.s

    @property
    def cost(self) -> float:
        return self.state.cost

    @property
    def failed(self) -> bool:
        return self.termination == SINGULAR

    def cost_trace(self) -> list[float]:
        """Interleaved half-step costs; non-increasing up to rounding."""
        out = []
        for st in self.trace:
            out.append(st.cost)
            if not math.isnan(st.cost_after_selection):
                out.append(st.cost_after_selection)
        return out

    def nu_trace(self) -> list[float]:
        return [st.nu_true for st in self.trace if st.nu_true is not None]


def project_signal(s: OrderedSelection, inst: UosInstance) -> np.ndarray:
    """Least-squares signal for a fixed selection, via QR of the selected rows."""
    if s.n != inst.n or s.m != inst.m:
        raise InvalidArgumentError("selection does not match the instance")
    A = inst.B[s.indices]
    k = A.shape[1]
    if A.shape[0] < k:
        raise SingularSystemError(A.shape[0], k)
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    tol = max(A.shape) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    rank = int(np.count_nonzero(diag > tol))
    if rank < k:
        raise SingularSystemError(rank, k)
    return solve_triangular(R, Q.T @ inst.x)


def _truth_stats(s, y, inst, known):
    if not known:
        return None, None, None
    yy = float(inst.y_true @ inst.y_true)
    return similarity(s, inst.s_true), float(y @ y) / yy, float(y @ inst.y_true) / yy


def _residual_norm(s, y, inst) -> float:
    r = inst.x - inst.B[s.indices] @ y
    return float(np.sqrt(r @ r))


def altmin_solve(inst: UosInstance, s_init: OrderedSelection,
                 config: AltMinConfig = AltMinConfig(), track_truth: bool | None = None,
                 ) -> SolveReport:
    """Alternate the least-squares and selection projections from ``s_init``.

    Stops when the selection repeats, when the cost changes by less than
    ``cost_tol * (1 + cost)`` between iterations, or after ``max_iter``
    iterations. Raises :class:`SingularSystemError` if a selection leaves the
    least-squares problem rank deficient.
    """
    if not inst.k <= inst.m <= inst.n:
        raise InvalidArgumentError("need k <= m <= n")
    if s_init.n != inst.n or s_init.m != inst.m:
        raise InvalidArgumentError("initial selection does not match the instance")
    if track_truth is None:
        track_truth = bool(np.any(inst.y_true != 0))

    trace: list[AltMinState] = []
    s = s_init
    prev_cost = math.inf
    termination = MAX_ITER
    for t in range(1, config.max_iter + 1):
        y = project_signal(s, inst)
        c_y = float(np.sum((inst.x - inst.B[s.indices] @ y) ** 2))
        s_next, c_s = project_selection(inst.x, inst.B @ y)
        nu, xi, th = _truth_stats(s, y, inst, track_truth)
        trace.append(AltMinState(t, s, y, c_y, c_s, nu, xi, th))
        if s_next == s:
            termination = FIXED_POINT
            break
        stalled = abs(prev_cost - c_s) < config.cost_tol * (1.0 + c_s)
        prev_cost = c_s
        s = s_next
        if stalled:
            termination = COST_STALL
            break

    if termination == FIXED_POINT:
        final = trace[-1]
    else:
        # the last selection step produced a new S; finish with its signal step
        y = project_signal(s, inst)
        c_y = float(np.sum((inst.x - inst.B[s.indices] @ y) ** 2))
        nu, xi, th = _truth_stats(s, y, inst, track_truth)
        final = AltMinState(len(trace) + 1, s, y, c_y, math.nan, nu, xi, th)
        trace.append(final)
    return SolveReport(final, len(trace), termination, _residual_norm(final.s, final.y, inst),
                       trace=trace)


def certify(residual: float, noise_norm: float, eta: float = 3.0,
            scale: float = 0.0, rtol: float = 1e-9) -> bool:
    """True iff ``residual <= eta * noise_norm`` (plus ``rtol * scale`` float slack).

    ``scale`` is typically ``||x||``; the slack lets noiseless recoveries, whose
    residual is rounding noise rather than exactly zero, certify.
    """
    if eta < 1:
        raise InvalidArgumentError(f"eta must be >= 1, got {eta}")
    if noise_norm < 0 or math.isnan(noise_norm):
        raise InvalidArgumentError("a non-negative noise norm is required")
    return bool(residual <= eta * noise_norm + rtol * scale)


def certify_report(report: SolveReport, inst: UosInstance, eta: float = 3.0) -> bool:
    return certify(report.residual, inst.noise_norm, eta, float(np.linalg.norm(inst.x)))


def solve_with_restarts(inst: UosInstance, max_restarts: int = 10, eta: float = 3.0,
                        config: AltMinConfig = AltMinConfig(), seed: SeedLike = None,
                        s_first: OrderedSelection | None = None) -> SolveReport:
    """Rerun AltMin from fresh uniform selections until one certifies.

    ``s_first`` optionally replaces the first random start. Rank-deficient runs
    count as failed attempts. Returns the first certified report, or else the
    lowest-cost one (``certified=False``).
    """
    if max_restarts < 1:
        raise InvalidArgumentError("max_restarts must be at least 1")
    if eta < 1:
        raise InvalidArgumentError(f"eta must be >= 1, got {eta}")
    rng = as_rng(seed)
    best: SolveReport | None = None
    for run in range(1, max_restarts + 1):
        s0 = s_first if (run == 1 and s_first is not None) else random_selection(inst.n, inst.m, rng)
        try:
            rep = altmin_solve(inst, s0, config)
        except SingularSystemError:
            continue
        rep.restarts = run
        rep.certified = certify_report(rep, inst, eta)
        if rep.certified:
            return rep
        if best is None or rep.cost < best.cost:
            best = rep
    if best is None:
        y = np.zeros(inst.k)
        st = AltMinState(0, s_first or OrderedSelection(np.arange(inst.m), inst.n), y,
                         float(inst.x @ inst.x))
        best = SolveReport(st, 0, SINGULAR, float(np.linalg.norm(inst.x)), trace=[st])
    best.restarts = max_restarts
    return best


def target_agreements(nu: float, m: int) -> int:
    """``ceil(nu * m)`` with a guard against products like 0.7 * 10 = 7.000000000000001."""
    return int(math.ceil(nu * m - 1e-9))


def genie_init(s_true: OrderedSelection, nu_target: float, seed: SeedLike = None,
               mode: str = "exact") -> OrderedSelection:
    """Initial selection sharing ``q = ceil(nu_target * m)`` rows with ``s_true``.

    ``mode="exact"`` draws uniformly from all ordered selections that agree
    with ``s_true`` in exactly ``q`` positions. ``mode="pinned"`` copies ``q``
    uniformly chosen rows of ``s_true`` and fills every gap between them with a
    uniform ordered draw from the indices available there; other rows may then
    coincide with the truth by chance, so the similarity is at least ``q / m``.
    """
    if not 0.0 <= nu_target <= 1.0:
        raise InvalidArgumentError(f"nu_target must lie in [0, 1], got {nu_target}")
    if mode not in ("exact", "pinned"):
        raise InvalidArgumentError(f"unknown genie mode {mode!r}")
    m, n = s_true.m, s_true.n
    q = target_agreements(nu_target, m)
    if q == m:
        return s_true
    rng = as_rng(seed)
    if mode == "pinned":
        return _pinned_init(s_true, q, rng)
    return _exact_init(s_true, q, rng)


def _pinned_init(s_true: OrderedSelection, q: int, rng: np.random.Generator) -> OrderedSelection:
    m, n = s_true.m, s_true.n
    truth = s_true.indices
    pins = np.sort(rng.choice(m, size=q, replace=False)) if q else np.empty(0, dtype=np.int64)
    idx = np.empty(m, dtype=np.int64)
    idx[pins] = truth[pins]
    # gaps between consecutive pins, with virtual pins at position -1 / index -1
    # and position m / index n
    bounds = [(-1, -1)] + [(int(p), int(truth[p])) for p in pins] + [(m, n)]
    for (pa, ia), (pb, ib) in zip(bounds[:-1], bounds[1:]):
        g = pb - pa - 1
        if g:
            pool = np.arange(ia + 1, ib)
            idx[pa + 1:pb] = np.sort(rng.choice(pool, size=g, replace=False))
    return OrderedSelection(idx, n)


def _exact_init(s_true: OrderedSelection, q: int, rng: np.random.Generator) -> OrderedSelection:
    m, n = s_true.m, s_true.n
    truth = s_true.indices
    slack = n - m
    j_all = np.arange(slack + 1)
    neg = -np.inf

    # Position l can only hold index l + j with 0 <= j <= n - m, and choosing
    # l + j forces index >= (l + 1) + j at the next position, so the band offset
    # j is non-decreasing. logW[l][j, a] counts (in log space) the completions
    # of positions l..m-1 whose band offsets are >= j and which collect exactly
    # a further agreements.
    def placements(l, nxt):
        # log-count when position l takes offset j, indexed [j, a]
        hit = (l + j_all) == truth[l]
        out = nxt.copy()
        if hit.any():
            jh = int(np.flatnonzero(hit)[0])
            out[jh, 1:] = nxt[jh, :-1]
            out[jh, 0] = neg
        return out

    logW = [None] * (m + 1)
    logW[m] = np.full((slack + 1, q + 1), neg)
    logW[m][:, 0] = 0.0
    for l in range(m - 1, -1, -1):
        place = placements(l, logW[l + 1])
        logW[l] = np.logaddexp.accumulate(place[::-1], axis=0)[::-1]

    if not np.isfinite(logW[0][0, q]):
        raise InfeasibleInitError(
            f"no ordered selection of {m} from {n} agrees with the truth in exactly {q} positions")

    idx = np.empty(m, dtype=np.int64)
    j_min, need = 0, q
    for l in range(m):
        place = placements(l, logW[l + 1])[j_min:, need]
        p = np.exp(place - logsumexp(place))
        j = j_min + int(rng.choice(p.size, p=p / p.sum()))
        idx[l] = l + j
        need -= int(l + j == truth[l])
        j_min = j
    out = OrderedSelection(idx, n)
    assert agreement_count(out, s_true) == q
    return out
