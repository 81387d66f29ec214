"""Run configuration, report assembly and file emission."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

from . import __version__
from .errors import ConfigError
from .measure import fmt_rational, parse_rational

ENV_OUT = "PARITY_ODOMETER_OUT"
ENV_WORKERS = "PARITY_ODOMETER_WORKERS"
MODES = ("exact", "monte-carlo", "auto")
DEFAULT_STATE_BUDGET = 10**7


@dataclass
class RunConfig:
    q: int = 5
    beta: str = "1/4"
    delta: float = 3.0
    depth: int | None = None
    seed: int = 0
    workers: int = 1
    mode: str = "auto"
    out: str = "out"
    state_budget: int = DEFAULT_STATE_BUDGET
    # command specific
    start: list[int] = field(default_factory=lambda: [1, 7, 0])
    buffer: int | None = None
    steps: int = 10
    ks_depths: list[int] = field(default_factory=lambda: [40, 160])
    i_k: int | None = None
    candidates: list[int] = field(default_factory=lambda: [3, 120])
    rho: str | None = None
    centering: str = "block"
    u: list[int] = field(default_factory=lambda: [0])
    s_grid: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0])
    relation: str = "both"
    region: str | None = None
    samples: int = 20_000
    count: int = 1000

    # never echoed: they must not change the report bytes
    NOT_ECHOED = ("workers", "out")

    @property
    def beta_value(self) -> Fraction:
        return parse_rational(self.beta)

    def validate(self) -> RunConfig:
        if not isinstance(self.q, int) or self.q < 2:
            raise ConfigError(f"q must be an integer >= 2, got {self.q!r}")
        try:
            beta = self.beta_value
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"beta {self.beta!r} is not a rational") from exc
        if not 0 < beta < Fraction(1, 2):
            raise ConfigError(f"beta must lie in (0, 1/2), got {self.beta}")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if self.depth is not None and self.depth < 0:
            raise ConfigError("depth must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.centering not in ("block", "full"):
            raise ConfigError("centering must be 'block' or 'full'")
        if self.relation not in ("parity", "full-tail", "both"):
            raise ConfigError("relation must be parity, full-tail or both")
        if len(self.candidates) != 2 or self.candidates[0] > self.candidates[1]:
            raise ConfigError("candidates must be [lo, hi] with lo <= hi")
        if self.rho is not None:
            try:
                parse_rational(self.rho)
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"rho {self.rho!r} is not a rational") from exc
        if self.count < 0 or self.samples < 1:
            raise ConfigError("count must be >= 0 and samples >= 1")
        return self

    def echo(self) -> dict:
        data = asdict(self)
        for key in self.NOT_ECHOED:
            data.pop(key, None)
        return data


CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "beta" in data:
        data["beta"] = str(data["beta"])
    if "rho" in data and data["rho"] is not None:
        data["rho"] = str(data["rho"])
    return data


def env_overrides() -> dict:
    out = {}
    if os.environ.get(ENV_OUT):
        out["out"] = os.environ[ENV_OUT]
    if os.environ.get(ENV_WORKERS):
        try:
            out["workers"] = int(os.environ[ENV_WORKERS])
        except ValueError as exc:
            raise ConfigError(f"{ENV_WORKERS} must be an integer") from exc
    return out


def _plain(x):
    if isinstance(x, Fraction):
        return fmt_rational(x)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, float):
        return float(f"{x:.15g}")
    return x


@dataclass
class RunReport:
    command: str
    config: RunConfig
    outputs: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    files: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "version": __version__,
            "config": _plain(self.config.echo()),
            "outputs": _plain(self.outputs),
            "flags": _plain(self.flags),
            "files": sorted(self.files),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n"


class Emitter:
    """Writes output files under one directory and remembers their names."""

    def __init__(self, out_dir: str | Path):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def csv(self, name: str, header: list[str], rows) -> Path:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
        p = self.path(name)
        p.write_text(buf.getvalue(), encoding="utf-8")
        return p

    def text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return p

    def report(self, report: RunReport, name: str = "report.json") -> Path:
        report.files = list(self.files)
        p = self.dir / name
        p.write_text(report.dumps(), encoding="utf-8")
        return p
