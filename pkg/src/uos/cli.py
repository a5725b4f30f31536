"""Command-line front end: ``uos solve | phase | sysid | rip | analysis | version``.

Parameter precedence is command-line flag, then the ``params`` block of a
``--config`` JSON file (a serialized :class:`~uos.io.RunConfig`), then the
built-in defaults. The master seed falls back to ``$UOS_SEED`` and then to 0.

Exit codes: 0 success, 1 usage or configuration error, 2 computational
failure (uncertified solve, parameters outside the analysed regime, rejection
sampling starvation).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .altmin import AltMinConfig, InfeasibleInitError, genie_init, solve_with_restarts
from .analysis import (ConditionViolatedError, FixedPointParams, OutOfRegimeError, envelope,
                       evolve, f_max, fixed_points, noiseless_fixed_points, noisy_fixed_points,
                       nu0, nu1, upsilon, upsilon_sufficient)
from .core import InvalidArgumentError, make_instance, parse_snr, random_selection
from .experiments import (DEFAULT_AXIS, STREAM_SCHEME, ExperimentGrid, parse_init, phase_sweep,
                          relative_error, sysid_sweep)
from .io import RunConfig, version_string, write_csv, write_heatmap, write_json
from .rip import SamplingFailureError, check_rip_H, check_rrip

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2

SOLVE_STREAMS = ("SeedSequence(master_seed, spawn_key=(0,)) draws the instance; "
                 "spawn_key=(1,) drives initialization and restarts")
RIP_STREAMS = ("SeedSequence(master_seed, spawn_key=(0,)) draws a fixed B; trials use "
               "SeedSequence(master_seed, spawn_key=(1,)).spawn(trials)")

DEFAULTS = {
    "solve": {"n": None, "m": None, "k": None, "snr": "noiseless", "init": "random",
              "restarts": 10, "eta": 3.0, "max_iter": 100, "cost_tol": 1e-10,
              "genie_mode": "exact"},
    "phase": {"n": 200, "kappa": list(DEFAULT_AXIS), "rho": list(DEFAULT_AXIS), "trials": 100,
              "snr": 20.0, "init": "random", "threshold_factor": 10.0, "max_iter": 100,
              "restarts": 1, "genie_mode": "pinned"},
    "sysid": {"n": 200, "kappa": list(DEFAULT_AXIS), "rho": list(DEFAULT_AXIS), "trials": 100,
              "snr": 20.0, "init": "genie:0.2", "threshold_factor": 10.0, "max_iter": 100,
              "restarts": 1, "genie_mode": "pinned", "tau": "fixed-n"},
    "rip": {"mode": "H", "n": 100, "m": None, "k": 5, "trials": 1000, "mu": 0.5,
            "perturbation": None, "hold_selection": False, "region": "included",
            "ensemble": "fixed"},
    "analysis": {"varsigma": None, "varrho": None, "delta": None, "snr": None, "epsilon": 0.0,
                 "nu_init": None, "steps": 200, "grid": 1001, "upsilon_grid": 10000},
}
REQUIRED = {"solve": ("n", "m", "k")}


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 1."""


class ComputationFailure(Exception):
    """In-regime failure; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _common(p):
    p.add_argument("--config", help="RunConfig JSON file; flags override its params")
    p.add_argument("--seed", type=int, help="master seed (fallback: $UOS_SEED, then 0)")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--workers", type=int, help="worker processes for sweeps")


def _sweep_flags(p, sysid=False):
    p.add_argument("--n", type=int)
    p.add_argument("--kappa", type=_float_list, help="comma-separated k/n values")
    p.add_argument("--rho", type=_float_list, help="comma-separated m/n values")
    p.add_argument("--trials", type=int)
    p.add_argument("--snr", help="SNR in dB or 'noiseless'")
    p.add_argument("--init", help="'random' or 'genie:<nu>'")
    p.add_argument("--threshold-factor", dest="threshold_factor", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--genie-mode", dest="genie_mode", choices=("pinned", "exact"))
    if sysid:
        p.add_argument("--tau", help="'fixed-n' (tau = n - k + 1) or an integer length")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uos", description=__doc__.splitlines()[0],
                     argument_default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="recover one random instance", argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--snr", help="SNR in dB or 'noiseless'")
    p.add_argument("--init", help="'random' or 'genie:<nu>'")
    p.add_argument("--restarts", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--cost-tol", dest="cost_tol", type=float)
    p.add_argument("--genie-mode", dest="genie_mode", choices=("exact", "pinned"))

    p = sub.add_parser("phase", help="success-rate sweep over (kappa, rho)",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    _sweep_flags(p)

    p = sub.add_parser("sysid", help="sweep with a convolutional measurement matrix",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    _sweep_flags(p, sysid=True)

    p = sub.add_parser("rip", help="sampled isometry constants", argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--mode", choices=("H", "HH"))
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--perturbation", type=float, help="propose local pairs at this relative scale")
    p.add_argument("--hold-selection", dest="hold_selection", action="store_true",
                   help="local pairs keep the same selection")
    p.add_argument("--region", choices=("included", "excluded"))
    p.add_argument("--ensemble", choices=("fixed", "fresh"),
                   help="one B for all trials, or a fresh Gaussian B per trial")

    p = sub.add_parser("analysis", help="envelope, fixed points and evolution curves",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--varsigma", type=float)
    p.add_argument("--varrho", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--snr", help="SNR in dB or 'noiseless' (with --delta)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--nu-init", dest="nu_init", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--grid", type=int, help="points on the nu grid")
    p.add_argument("--upsilon-grid", dest="upsilon_grid", type=int)

    sub.add_parser("version", help="print the version")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the optional config file and the flags."""
    command = args.command
    given = {k: v for k, v in vars(args).items()
             if k not in ("command", "config", "seed", "out", "workers")}
    params = dict(DEFAULTS[command])
    seed, out, workers = None, ".", 1
    if getattr(args, "config", None):
        try:
            cfg = RunConfig.from_json(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if cfg.command != command:
            raise UsageError(f"config is for '{cfg.command}', not '{command}'")
        unknown = set(cfg.params) - set(params)
        if unknown:
            raise UsageError(f"unknown parameters in config: {sorted(unknown)}")
        params.update(cfg.params)
        seed, out, workers = cfg.seed, cfg.output_dir, cfg.workers
    params.update(given)
    if "seed" in args:
        seed = args.seed
    if seed is None:
        env = os.environ.get("UOS_SEED")
        if env is not None:
            try:
                seed = int(env)
            except ValueError:
                raise UsageError(f"UOS_SEED must be an integer, got {env!r}") from None
        else:
            seed = 0
    if seed < 0:
        raise UsageError("seed must be non-negative")
    out = getattr(args, "out", out)
    workers = getattr(args, "workers", workers)
    if workers < 1:
        raise UsageError("workers must be at least 1")
    for key in REQUIRED.get(command, ()):
        if params.get(key) is None:
            raise UsageError(f"missing required parameter --{key.replace('_', '-')}")
    return RunConfig(command, params, seed, out, workers)


def _outdir(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(cfg: RunConfig, wall: float, scheme: str, outputs, extra=None) -> dict:
    doc = {"command": cfg.command, "version": version_string(), "config": cfg.to_dict(),
           "seed": cfg.seed, "stream_scheme": scheme, "wall_time_s": wall,
           "outputs": list(outputs)}
    if extra:
        doc.update(extra)
    return doc


def cmd_solve(cfg: RunConfig) -> int:
    p = cfg.params
    n, m, k = int(p["n"]), int(p["m"]), int(p["k"])
    nu = parse_init(p["init"])
    ss_inst = np.random.SeedSequence(cfg.seed, spawn_key=(0,))
    ss_solve = np.random.SeedSequence(cfg.seed, spawn_key=(1,))
    t0 = time.perf_counter()
    inst = make_instance(n, m, k, p["snr"], seed=ss_inst)
    rng = np.random.default_rng(ss_solve)
    s0 = None
    if nu is not None:
        try:
            s0 = genie_init(inst.s_true, nu, rng, mode=p["genie_mode"])
        except InfeasibleInitError as exc:
            raise ComputationFailure(str(exc)) from None
    rep = solve_with_restarts(inst, int(p["restarts"]), float(p["eta"]),
                              AltMinConfig(int(p["max_iter"]), float(p["cost_tol"])),
                              seed=rng, s_first=s0)
    wall = time.perf_counter() - t0
    scale = float(np.linalg.norm(inst.x))
    doc = {
        "command": "solve", "version": version_string(), "config": cfg.to_dict(),
        "seed": cfg.seed, "stream_scheme": SOLVE_STREAMS,
        "n": n, "m": m, "k": k, "snr_linear": inst.snr,
        "y_hat": rep.y, "s_hat": rep.s.one_based(),
        "y_true": inst.y_true, "s_true": inst.s_true.one_based(),
        "cost_trace": rep.cost_trace(), "nu_trace": rep.nu_trace(),
        "termination": rep.termination, "iterations": rep.iterations, "restarts": rep.restarts,
        "relative_error": None if rep.failed else relative_error(inst.y_true, rep.y),
        "certification": {"certified": rep.certified, "eta": float(p["eta"]),
                          "residual": rep.residual, "noise_norm": inst.noise_norm,
                          "threshold": float(p["eta"]) * inst.noise_norm + 1e-9 * scale},
        "wall_time_s": wall,
    }
    path = write_json(_outdir(cfg) / "solve_report.json", doc)
    status = "certified" if rep.certified else "NOT certified"
    print(f"{status}: residual {rep.residual:.6g}, eta*||w|| {float(p['eta']) * inst.noise_norm:.6g}, "
          f"{rep.restarts} run(s); report -> {path}")
    return EXIT_OK if rep.certified else EXIT_FAILURE


def _grid(cfg: RunConfig) -> ExperimentGrid:
    p = cfg.params
    return ExperimentGrid(n=int(p["n"]), kappa=p["kappa"], rho=p["rho"], trials=int(p["trials"]),
                          snr_db=p["snr"], init=p["init"], seed=cfg.seed,
                          threshold_factor=float(p["threshold_factor"]),
                          max_iter=int(p["max_iter"]), restarts=int(p["restarts"]),
                          genie_mode=p["genie_mode"])


def _skipped_cells(res):
    g = res.grid
    return [[g.rho[i], g.kappa[j]] for i, j in zip(*np.nonzero(res.skipped))]


def cmd_phase(cfg: RunConfig) -> int:
    grid = _grid(cfg)
    res = phase_sweep(grid, workers=cfg.workers)
    out = _outdir(cfg)
    write_heatmap(out / "phase.csv", grid.rho, grid.kappa, res.rates)
    write_json(out / "manifest.json", _manifest(cfg, res.wall_time, STREAM_SCHEME, ["phase.csv"],
                                                {"skipped_cells": _skipped_cells(res)}))
    print(f"{grid.shape[0]}x{grid.shape[1]} grid, {grid.trials} trials/cell in "
          f"{res.wall_time:.1f} s -> {out / 'phase.csv'}")
    return EXIT_OK


def cmd_sysid(cfg: RunConfig) -> int:
    grid = _grid(cfg)
    tau = cfg.params["tau"]
    if tau != "fixed-n":
        try:
            tau = int(tau)
        except (TypeError, ValueError):
            raise UsageError(f"--tau must be 'fixed-n' or an integer, got {tau!r}") from None
        if tau < 1:
            raise UsageError("--tau must be positive")
    cmp = sysid_sweep(grid, tau, workers=cfg.workers)
    out = _outdir(cfg)
    write_heatmap(out / "sysid.csv", grid.rho, grid.kappa, cmp.sysid.rates)
    write_heatmap(out / "gaussian.csv", grid.rho, grid.kappa, cmp.gaussian.rates)
    rows = []
    for i, r in enumerate(grid.rho):
        for j, kp in enumerate(grid.kappa):
            rows.append([r, kp, cmp.sysid.rates[i, j], cmp.gaussian.rates[i, j],
                         cmp.difference[i, j]])
    write_csv(out / "comparison.csv", ["rho", "kappa", "sysid_rate", "gaussian_rate",
                                       "difference"], rows)
    wall = cmp.sysid.wall_time + cmp.gaussian.wall_time
    write_json(out / "manifest.json", _manifest(
        cfg, wall, STREAM_SCHEME, ["sysid.csv", "gaussian.csv", "comparison.csv"],
        {"skipped_cells": _skipped_cells(cmp.sysid)}))
    print(f"sysid sweep in {wall:.1f} s -> {out / 'comparison.csv'}")
    return EXIT_OK


def cmd_rip(cfg: RunConfig) -> int:
    p = cfg.params
    n, k = int(p["n"]), int(p["k"])
    m = None if p["m"] is None else int(p["m"])
    trials = int(p["trials"])
    if trials < 1:
        raise UsageError("--trials must be positive")
    if n < 1 or k < 1:
        raise UsageError("n and k must be positive")
    if p["ensemble"] == "fresh":
        B = lambda rng: rng.standard_normal((n, k))
    else:
        B = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,))
                                  ).standard_normal((n, k))
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(1,))
    t0 = time.perf_counter()
    if p["mode"] == "H":
        rep = check_rip_H(B, trials, ss, m=m)
    else:
        try:
            rep = check_rrip(B, float(p["mu"]), trials, ss, m=m, perturbation=p["perturbation"],
                             region=p["region"], move_row=not p["hold_selection"])
        except SamplingFailureError as exc:
            raise ComputationFailure(str(exc)) from None
    wall = time.perf_counter() - t0
    out = _outdir(cfg)
    write_csv(out / "rip_trials.csv", ["trial", "ratio", "distance", "similarity", "norm"],
              rep.rows())
    doc = _manifest(cfg, wall, RIP_STREAMS, ["rip_trials.csv"])
    doc["report"] = rep.summary()
    write_json(out / "rip_report.json", doc)
    name = "epsilon_hat" if rep.kind == "H" else "delta_hat"
    print(f"{name} = {rep.constant:.6g} over {rep.num_samples} samples "
          f"(mean ratio {rep.mean_ratio:.6g}) -> {out / 'rip_report.json'}")
    return EXIT_OK


def _analysis_params(p) -> FixedPointParams:
    direct = p["varsigma"] is not None or p["varrho"] is not None
    derived = p["delta"] is not None
    if direct == derived:
        raise UsageError("give either --varsigma and --varrho, or --delta (with --snr, --epsilon)")
    if direct:
        if p["varsigma"] is None or p["varrho"] is None:
            raise UsageError("--varsigma and --varrho must be given together")
        return FixedPointParams(float(p["varsigma"]), float(p["varrho"]))
    snr = parse_snr(p["snr"] if p["snr"] is not None else "noiseless")
    return FixedPointParams.from_delta(float(p["delta"]), snr, float(p["epsilon"]))


def cmd_analysis(cfg: RunConfig) -> int:
    p = cfg.params
    t0 = time.perf_counter()
    params = _analysis_params(p)
    params.require_condition()
    doc = {"varsigma": params.varsigma, "varrho": params.varrho, "delta": params.delta,
           "zeta": params.zeta, "nu0": nu0(params), "nu1": nu1(params), "F_max": f_max(params),
           "sufficient_condition": upsilon_sufficient(params)}
    if params.varrho == 0.0:
        fp = noiseless_fixed_points(params.varsigma)
        doc.update(regime="noiseless", nu_min=fp.nu_min, nu_max=fp.nu_max,
                   alpha_min=fp.alpha_min, alpha_max=math.pi / 2, two_fixed_points=True,
                   closed_form=fp.closed_form, closed_form_printed=fp.closed_form_printed)
    else:
        fp = noisy_fixed_points(params, int(p["upsilon_grid"]))
        doc.update(regime="noisy", two_fixed_points=fp is not None,
                   nu_min=fp.nu_min if fp else None, nu_max=fp.nu_max if fp else None,
                   alpha_min=fp.alpha_min if fp else None, alpha_max=fp.alpha_max if fp else None)
    out = _outdir(cfg)
    grid = np.linspace(0.0, 1.0, int(p["grid"]))
    write_csv(out / "envelope.csv", ["nu", "F0"], zip(grid, np.asarray(envelope(grid, params))))
    alpha = np.linspace(0.01, math.pi / 2 - 0.01, int(p["upsilon_grid"]))
    write_csv(out / "upsilon.csv", ["alpha", "upsilon"], zip(alpha, upsilon(alpha, params)))
    nu_init = p["nu_init"]
    if nu_init is None:
        nu_init = min(1.0, doc["nu_min"] + 1e-3) if doc.get("nu_min") is not None else 1.0
    trace = evolve(params, float(nu_init), int(p["steps"]))
    write_csv(out / "evolution.csv", ["t", "nu"], enumerate(trace.nu, start=1))
    doc["evolution"] = {"nu_init": float(nu_init), "steps": int(p["steps"]), "limit": trace.limit}
    doc.update(_manifest(cfg, time.perf_counter() - t0, "deterministic (no randomness)",
                         ["envelope.csv", "upsilon.csv", "evolution.csv"]))
    write_json(out / "fixedpoints.json", doc)
    print(f"nu0={doc['nu0']:.6g} nu_min={doc['nu_min']} nu_max={doc['nu_max']} "
          f"F_max={doc['F_max']:.6g} -> {out / 'fixedpoints.json'}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "solve": cmd_solve, "phase": cmd_phase, "sysid": cmd_sysid, "rip": cmd_rip,
    "analysis": cmd_analysis,
}


def run(cfg: RunConfig) -> int:
    return COMMANDS[cfg.command](cfg)


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise UsageError("a subcommand is required: solve, phase, sysid, rip, analysis, version")
        if args.command == "version":
            print(version_string())
            return EXIT_OK
        cfg = resolve_config(args)
        return run(cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"uos: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConditionViolatedError, OutOfRegimeError, ComputationFailure) as exc:
        print(f"uos: computation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (InvalidArgumentError, ValueError) as exc:
        print(f"uos: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
