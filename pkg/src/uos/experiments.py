"""Phase-transition sweeps over ``(kappa, rho) = (k/n, m/n)`` and the system-identification scenario.

Randomness is derived per work item: trial ``t`` of cell ``(i, j)`` (row ``i``
of the rho axis, column ``j`` of the kappa axis) draws from

    SeedSequence(master, spawn_key=(i, j, t, stream))

with ``stream`` 0 for the measurement matrix, 1 for the signal, selection and
noise, and 2 for the initialization and any restarts. Results therefore do
not depend on worker count or scheduling, and two sweeps that differ only in
the matrix family or the init mode see identical signals and selections.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from .altmin import AltMinConfig, SolveReport, genie_init, solve_with_restarts
from .core import (InvalidArgumentError, UosInstance, make_instance, parse_snr,
                   random_selection)

__all__ = [
    "STREAM_SCHEME",
    "DEFAULT_AXIS",
    "ExperimentGrid",
    "SweepResult",
    "SysIdSetup",
    "parse_init",
    "cell_dims",
    "trial_seed",
    "trial_success",
    "relative_error",
    "run_trial",
    "phase_sweep",
    "build_convolution_matrix",
    "sysid_tau",
    "sysid_sweep",
    "SysIdComparison",
    "monotonicity",
]

STREAM_SCHEME = ("numpy.random.SeedSequence(master_seed, spawn_key=(rho_index, kappa_index, "
                 "trial, stream)); stream 0 = measurement matrix, 1 = signal/selection/noise, "
                 "2 = initialization and restarts; PCG64 generator")
STREAM_MATRIX, STREAM_SIGNAL, STREAM_INIT = 0, 1, 2

DEFAULT_AXIS = tuple(round(0.05 * i, 2) for i in range(1, 20))
NOISELESS_THRESHOLD = 1e-10


def parse_init(init: str) -> Optional[float]:
    """``"random"`` -> ``None``; ``"genie:0.2"`` or ``"genie(0.2)"`` -> ``0.2``."""
    text = str(init).strip().lower()
    if text == "random":
        return None
    for pre, post in (("genie:", ""), ("genie(", ")")):
        if text.startswith(pre) and text.endswith(post):
            body = text[len(pre):len(text) - len(post)]
            try:
                nu = float(body)
            except ValueError:
                break
            if not 0.0 <= nu <= 1.0:
                raise InvalidArgumentError(f"genie similarity must lie in [0, 1], got {nu}")
            return nu
    raise InvalidArgumentError(f"init must be 'random' or 'genie:<nu>', got {init!r}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-12))


def cell_dims(n: int, kappa: float, rho: float) -> tuple[int, int]:
    """``(k, m) = (round(kappa n), round(rho n))``."""
    return _round_half_up(kappa * n), _round_half_up(rho * n)


def _feasible(n, k, m):
    return 1 <= k <= m <= n


@dataclass
class ExperimentGrid:
    """Sweep configuration. ``init`` is ``"random"`` or ``"genie:<nu>"``."""

    n: int = 200
    kappa: Sequence[float] = DEFAULT_AXIS
    rho: Sequence[float] = DEFAULT_AXIS
    trials: int = 100
    snr_db: object = 20.0
    init: str = "random"
    seed: int = 0
    threshold_factor: float = 10.0
    max_iter: int = 100
    restarts: int = 1
    genie_mode: str = "pinned"

    def __post_init__(self):
        self.kappa = tuple(float(v) for v in self.kappa)
        self.rho = tuple(float(v) for v in self.rho)
        if self.n < 1:
            raise InvalidArgumentError("n must be positive")
        if self.trials < 1:
            raise InvalidArgumentError("trials must be positive")
        if not self.kappa or not self.rho:
            raise InvalidArgumentError("kappa and rho axes must be non-empty")
        for v in self.kappa + self.rho:
            if not 0.0 < v <= 1.0:
                raise InvalidArgumentError(f"grid values must lie in (0, 1], got {v}")
        if self.threshold_factor <= 0:
            raise InvalidArgumentError("threshold_factor must be positive")
        if self.restarts < 1:
            raise InvalidArgumentError("restarts must be at least 1")
        parse_init(self.init)
        parse_snr(self.snr_db)
        if self.genie_mode not in ("pinned", "exact"):
            raise InvalidArgumentError("genie_mode must be 'pinned' or 'exact'")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rho), len(self.kappa)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kappa"], d["rho"] = list(self.kappa), list(self.rho)
        return d


@dataclass
class SweepResult:
    """Success counts per cell; rows follow ``grid.rho``, columns ``grid.kappa``.

    Skipped (infeasible) cells carry ``NaN`` in :attr:`rates`.
    """

    grid: ExperimentGrid
    successes: np.ndarray
    skipped: np.ndarray
    wall_time: float = 0.0

    @property
    def rates(self) -> np.ndarray:
        r = self.successes / float(self.grid.trials)
        return np.where(self.skipped, np.nan, r)


def trial_seed(master: int, i: int, j: int, trial: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(i, j, trial, stream))


def relative_error(y_true, y_hat) -> float:
    y_true = np.asarray(y_true, dtype=float)
    diff = y_true - np.asarray(y_hat, dtype=float)
    return float(diff @ diff) / float(y_true @ y_true)


def trial_success(inst: UosInstance, report: SolveReport, threshold_factor: float = 10.0) -> bool:
    """``||y - y_hat||^2 / ||y||^2 <= threshold_factor / snr`` (``<= 1e-10`` when noiseless)."""
    if report.failed:
        return False
    err = relative_error(inst.y_true, report.y)
    limit = NOISELESS_THRESHOLD if math.isinf(inst.snr) else threshold_factor / inst.snr
    return bool(err <= limit)


def build_convolution_matrix(b, k: int) -> np.ndarray:
    """Banded Toeplitz ``B`` with ``B[l, t] = b[l - t]``, so ``B @ y`` is the full convolution."""
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.size < 1:
        raise InvalidArgumentError("training sequence must be a non-empty vector")
    if k < 1:
        raise InvalidArgumentError("k must be positive")
    tau = b.size
    B = np.zeros((k + tau - 1, k))
    for t in range(k):
        B[t:t + tau, t] = b
    return B


@dataclass(frozen=True)
class SysIdSetup:
    """Training sequence ``b`` (length tau) and impulse response length ``k``."""

    b: np.ndarray
    k: int

    @property
    def tau(self) -> int:
        return int(np.asarray(self.b).size)

    @property
    def n(self) -> int:
        return self.k + self.tau - 1

    def matrix(self) -> np.ndarray:
        return build_convolution_matrix(self.b, self.k)

    def deletions(self, m: int) -> int:
        return self.n - m


def sysid_tau(n: int, k: int, policy="fixed-n") -> int:
    """Training length: ``n - k + 1`` under ``"fixed-n"``, or a fixed integer."""
    if policy == "fixed-n":
        return n - k + 1
    tau = int(policy)
    if tau < 1:
        raise InvalidArgumentError("tau must be positive")
    return tau


def _draw_matrix(family, n, k, rng, tau_policy="fixed-n"):
    if family == "gaussian":
        return rng.standard_normal((n, k))
    if family == "convolution":
        tau = sysid_tau(n, k, tau_policy)
        return build_convolution_matrix(rng.standard_normal(tau), k)
    raise InvalidArgumentError(f"unknown matrix family {family!r}")


def run_trial(grid: ExperimentGrid, i: int, j: int, trial: int, family: str = "gaussian",
              tau_policy="fixed-n") -> tuple[bool, float]:
    """Run one seeded trial of cell ``(i, j)``; returns ``(success, relative error)``."""
    n = grid.n
    k, m = cell_dims(n, grid.kappa[j], grid.rho[i])
    B = _draw_matrix(family, n, k, np.random.default_rng(
        trial_seed(grid.seed, i, j, trial, STREAM_MATRIX)), tau_policy)
    inst = make_instance(B.shape[0], m, k, grid.snr_db,
                         seed=trial_seed(grid.seed, i, j, trial, STREAM_SIGNAL), B=B)
    rng = np.random.default_rng(trial_seed(grid.seed, i, j, trial, STREAM_INIT))
    nu = parse_init(grid.init)
    if nu is None:
        s0 = random_selection(inst.n, m, rng)
    else:
        s0 = genie_init(inst.s_true, nu, rng, mode=grid.genie_mode)
    rep = solve_with_restarts(inst, grid.restarts, config=AltMinConfig(grid.max_iter),
                              seed=rng, s_first=s0)
    err = math.inf if rep.failed else relative_error(inst.y_true, rep.y)
    return trial_success(inst, rep, grid.threshold_factor), err


def _run_cell(args):
    grid, i, j, family, tau_policy = args
    return sum(run_trial(grid, i, j, t, family, tau_policy)[0] for t in range(grid.trials))


def _sweep(grid: ExperimentGrid, family: str, tau_policy, workers: int) -> SweepResult:
    t0 = time.perf_counter()
    rows, cols = grid.shape
    successes = np.zeros((rows, cols), dtype=np.int64)
    skipped = np.zeros((rows, cols), dtype=bool)
    jobs = []
    for i, rho in enumerate(grid.rho):
        for j, kappa in enumerate(grid.kappa):
            k, m = cell_dims(grid.n, kappa, rho)
            if not _feasible(grid.n, k, m):
                skipped[i, j] = True
            else:
                jobs.append((grid, i, j, family, tau_policy))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(_run_cell, jobs))
    else:
        counts = [_run_cell(job) for job in jobs]
    for (_, i, j, _, _), c in zip(jobs, counts):
        successes[i, j] = c
    return SweepResult(grid, successes, skipped, time.perf_counter() - t0)


def phase_sweep(grid: ExperimentGrid, workers: int = 1) -> SweepResult:
    """Success counts with Gaussian ``B``; cells with ``k > m`` are skipped."""
    return _sweep(grid, "gaussian", None, workers)


@dataclass
class SysIdComparison:
    """Paired sweeps with convolutional and Gaussian ``B`` on shared seeds."""

    sysid: SweepResult
    gaussian: SweepResult
    tau_policy: object = "fixed-n"

    @property
    def difference(self) -> np.ndarray:
        return self.sysid.rates - self.gaussian.rates

    def easy_mask(self, level: float = 0.5) -> np.ndarray:
        """Cells where the Gaussian success rate is at least ``level``."""
        g = self.gaussian.rates
        return np.where(np.isnan(g), False, g >= level)


def sysid_sweep(grid: ExperimentGrid, tau_policy="fixed-n", workers: int = 1,
                compare: bool = True) -> SysIdComparison | SweepResult:
    """Sweep with ``B`` built from a Gaussian training sequence.

    Under ``tau_policy="fixed-n"`` the training length is ``n - k + 1`` so
    that the convolution output has exactly ``grid.n`` samples. With an
    integer policy ``n = k + tau - 1`` varies per cell; ``grid.n`` then only
    sets ``k`` and ``m`` via the ratios.
    """
    sysid_tau(grid.n, 1, tau_policy)
    if tau_policy != "fixed-n":
        # each cell's n follows from k and tau; the Gaussian twin uses the same n
        return _sysid_fixed_tau(grid, int(tau_policy), workers, compare)
    res = _sweep(grid, "convolution", tau_policy, workers)
    if not compare:
        return res
    return SysIdComparison(res, _sweep(grid, "gaussian", None, workers), tau_policy)


def _sysid_fixed_tau(grid, tau, workers, compare):
    # n = k + tau - 1 differs per column, so run each column as its own 1-column grid
    rows, cols = grid.shape
    out = {}
    for family in (("convolution", "gaussian") if compare else ("convolution",)):
        succ = np.zeros((rows, cols), dtype=np.int64)
        skip = np.zeros((rows, cols), dtype=bool)
        t0 = time.perf_counter()
        for j, kappa in enumerate(grid.kappa):
            k = cell_dims(grid.n, kappa, 1.0)[0]
            n_j = k + tau - 1
            for i, rho in enumerate(grid.rho):
                m = cell_dims(grid.n, 0.0, rho)[1]
                if not _feasible(n_j, k, m):
                    skip[i, j] = True
                    continue
                sub = replace(grid, n=n_j, kappa=(k / n_j,), rho=(m / n_j,))
                # keep the parent's cell indices in the seed key
                succ[i, j] = sum(_fixed_tau_trial(sub, grid.seed, i, j, t, family, tau, k, m)
                                 for t in range(grid.trials))
        out[family] = SweepResult(grid, succ, skip, time.perf_counter() - t0)
    if not compare:
        return out["convolution"]
    return SysIdComparison(out["convolution"], out["gaussian"], tau)


def _fixed_tau_trial(grid, master, i, j, trial, family, tau, k, m):
    n = k + tau - 1
    rng_b = np.random.default_rng(trial_seed(master, i, j, trial, STREAM_MATRIX))
    B = (build_convolution_matrix(rng_b.standard_normal(tau), k) if family == "convolution"
         else rng_b.standard_normal((n, k)))
    inst = make_instance(n, m, k, grid.snr_db,
                         seed=trial_seed(master, i, j, trial, STREAM_SIGNAL), B=B)
    rng = np.random.default_rng(trial_seed(master, i, j, trial, STREAM_INIT))
    nu = parse_init(grid.init)
    s0 = (random_selection(n, m, rng) if nu is None
          else genie_init(inst.s_true, nu, rng, mode=grid.genie_mode))
    rep = solve_with_restarts(inst, grid.restarts, config=AltMinConfig(grid.max_iter),
                              seed=rng, s_first=s0)
    return trial_success(inst, rep, grid.threshold_factor)


def monotonicity(rho, rates) -> tuple[float, float]:
    """Rank correlation of success rate against ``rho`` along one row.

    Returns ``(tie_consistent, tie_averaged)``. The first breaks ties between
    equal rates in ``rho`` order, so a row that never decreases scores 1 even
    when it saturates at 0 or 1; the second is the usual Spearman coefficient
    with averaged ranks (``nan`` for constant rows). Skipped cells are dropped.
    """
    rho = np.asarray(rho, dtype=float)
    rates = np.asarray(rates, dtype=float)
    keep = ~np.isnan(rates)
    rho, rates = rho[keep], rates[keep]
    if rho.size < 2:
        return 1.0, math.nan
    order = np.lexsort((rho, rates))
    ranks = np.empty(rho.size)
    ranks[order] = np.arange(rho.size)
    tie_consistent = float(spearmanr(rho, ranks)[0])
    if np.all(rates == rates[0]):
        return tie_consistent, math.nan
    return tie_consistent, float(spearmanr(rho, rates)[0])
