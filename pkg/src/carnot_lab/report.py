"""Experiment reports, config files and output formats."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .errors import ConfigError

SEED_ENV = "CARNOT_LAB_SEED"


def load_config(path) -> dict:
    """Read a JSON or TOML config file into a dict."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        if p.suffix.lower() == ".toml":
            data = tomli.loads(text)
        elif p.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            try:
                data = json.loads(text)
            except json.JSONDecodeError:
                data = tomli.loads(text)
    except (json.JSONDecodeError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at top level")
    return data


def resolve_seed(cli_seed=None, config=None, default: int = 0) -> int:
    """--seed beats the environment variable, which beats the config file."""
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from exc
    if config and "seed" in config:
        try:
            return int(config["seed"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("seed must be an integer") from exc
    return default


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def config_hash(cfg: dict) -> str:
    blob = json.dumps(_canonical(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def git_rev() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        v = float(v)
    if isinstance(v, float) and not np.isfinite(v):
        return None
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


@dataclass
class ExperimentReport:
    """Rows of one experiment plus a summary and run metadata.

    Every row carries the seed and config hash.  CSV output holds only the
    rows (no timing), so identical inputs give identical bytes.
    """

    name: str
    records: list
    summary: dict = field(default_factory=dict)
    seed: int = 0
    config: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def __post_init__(self):
        h = config_hash({"experiment": self.name, **self.config})
        self.config_hash = h
        for r in self.records:
            r["seed"] = self.seed
            r["config_hash"] = h

    def columns(self) -> list:
        cols = []
        for r in self.records:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns()
        w.writerow(cols)
        for r in self.records:
            w.writerow([fmt(r.get(c)) for c in cols])
        return buf.getvalue()

    def to_json(self) -> str:
        obj = {
            "experiment": self.name,
            "metadata": {"seed": self.seed, "config_hash": self.config_hash, "git_rev": git_rev(),
                         "runtime_s": self.runtime_s, "config": _jsonable(self.config)},
            "summary": _jsonable(self.summary),
            "records": _jsonable(self.records),
        }
        return json.dumps(obj, indent=2)

    def render(self, fmt_name: str = "csv") -> str:
        return self.to_json() if fmt_name == "json" else self.to_csv()


def render_rows(rows: list, fmt_name: str = "csv", meta: dict | None = None) -> str:
    """Plain output for the small single-shot commands."""
    if fmt_name == "json":
        obj = {"records": _jsonable(rows)}
        if meta:
            obj["metadata"] = _jsonable(meta)
        return json.dumps(obj, indent=2)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt(r.get(c)) if not isinstance(r.get(c), (list, tuple, np.ndarray))
                    else json.dumps(_jsonable(r.get(c))) for c in cols])
    return buf.getvalue()
