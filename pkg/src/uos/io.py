"""Run configuration and CSV/JSON serialization shared by the command-line tools.

CSV numbers use ``%.17g`` (locale-independent, round-trips doubles); NaN is
written as ``nan``. JSON schemas for every emitted document ship in
``uos/schemas`` and can be loaded with :func:`load_schema`.
"""
from __future__ import annotations

import csv
import json
import math
import os
import subprocess
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import __version__

__all__ = [
    "RunConfig",
    "fmt_number",
    "write_csv",
    "read_csv",
    "write_json",
    "heatmap_rows",
    "write_heatmap",
    "read_heatmap",
    "load_schema",
    "version_string",
    "to_jsonable",
]

SCHEMA_NAMES = ("run_config", "solve_report", "manifest", "rip_report", "fixedpoints")


def _normalize(value):
    """Tuples and numpy values become plain JSON-compatible Python objects."""
    if isinstance(value, dict):
        return {str(k): _normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_normalize(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class RunConfig:
    """A command with its parameter block, master seed, output directory and worker count."""

    command: str
    params: dict = field(default_factory=dict)
    seed: Optional[int] = None
    output_dir: str = "."
    workers: int = 1

    def __post_init__(self):
        self.params = _normalize(dict(self.params))
        if self.seed is not None:
            self.seed = int(self.seed)
        self.workers = int(self.workers)
        self.output_dir = str(self.output_dir)

    def to_dict(self) -> dict:
        return {"command": self.command, "params": _normalize(self.params), "seed": self.seed,
                "output_dir": self.output_dir, "workers": self.workers}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = set(data) - {"command", "params", "seed", "output_dir", "workers"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "command" not in data:
            raise ValueError("config is missing 'command'")
        return cls(data["command"], data.get("params", {}), data.get("seed"),
                   data.get("output_dir", "."), data.get("workers", 1))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))


def fmt_number(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt_number(c) for c in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def to_jsonable(obj):
    """Like :func:`_normalize` but maps non-finite floats to ``None``."""
    obj = _normalize(obj)
    if isinstance(obj, dict):
        return {k: to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def heatmap_rows(rho, kappa, rates):
    """Header and rows for a success-rate heatmap (rows = rho, columns = kappa)."""
    header = ["rho\\kappa"] + [fmt_number(float(k)) for k in kappa]
    rows = [[float(r)] + [float(v) for v in rates[i]] for i, r in enumerate(rho)]
    return header, rows


def write_heatmap(path, rho, kappa, rates) -> Path:
    header, rows = heatmap_rows(rho, kappa, rates)
    return write_csv(path, header, rows)


def read_heatmap(path):
    """Inverse of :func:`write_heatmap`: ``(rho, kappa, rates)``."""
    header, rows = read_csv(path)
    kappa = np.array([float(v) for v in header[1:]])
    rho = np.array([float(r[0]) for r in rows])
    rates = np.array([[float(v) for v in r[1:]] for r in rows])
    return rho, kappa, rates


def load_schema(name: str) -> dict:
    if name not in SCHEMA_NAMES:
        raise ValueError(f"unknown schema {name!r}; expected one of {SCHEMA_NAMES}")
    text = resources.files("uos").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def version_string() -> str:
    """Package version, with ``git describe`` output appended when available."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5,
                             env={**os.environ, "GIT_OPTIONAL_LOCKS": "0"})
        desc = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"{__version__}+g{desc}" if desc else __version__
