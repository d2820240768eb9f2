"""Run records: content-addressed output directories with an atomic manifest."""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

DEFAULT_OUT_DIR = "fracalc-runs"
OUT_DIR_ENV = "FRACALC_OUT_DIR"


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(subcommand: str, config: dict, seed: int) -> str:
    blob = canonical_json({"subcommand": subcommand, "config": config, "seed": seed})
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def resolve_out_dir(flag: str | None) -> Path:
    env = os.environ.get(OUT_DIR_ENV)
    return Path(env or flag or DEFAULT_OUT_DIR)


def atomic_write(path: str | Path, data: str | bytes) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def render_table(columns: list[str], rows, fmt: str = "csv") -> str:
    """Serialize a table; floats use 17 significant digits so output is reproducible."""
    rows = list(rows)
    if fmt == "json":
        data = {c: [r[i] for r in rows] for i, c in enumerate(columns)}
        data = {c: [v if isinstance(v, str) else _json_num(v) for v in vals] for c, vals in data.items()}
        return json.dumps({"schema": 1, "columns": columns, "data": data}, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(v) for v in r) + "\n")
    return buf.getvalue()


def _json_num(v):
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if np.isfinite(v) else None


class RunRecorder:
    """Collects outputs of one run under ``out_dir/<subcommand>/<hash>/``."""

    def __init__(self, out_dir: Path, subcommand: str, config: dict, seed: int):
        self.subcommand = subcommand
        self.config = config
        self.seed = seed
        self.hash = config_hash(subcommand, config, seed)
        self.dir = Path(out_dir) / subcommand / self.hash
        self.started = datetime.now(timezone.utc).isoformat()
        self.outputs: dict[str, dict] = {}
        self.diagnostics: dict = {}

    def save(self, name: str, text: str, extra_path: str | Path | None = None) -> None:
        """Store ``text`` in the run directory and, optionally, at a user path."""
        atomic_write(self.dir / name, text)
        entry = {"path": name, "sha256": hashlib.sha256(text.encode()).hexdigest()}
        if extra_path is not None:
            atomic_write(extra_path, text)
            entry["copy"] = str(extra_path)
        self.outputs[name] = entry

    def finish(self, status: str = "ok") -> Path:
        manifest = {
            "schema": 1,
            "subcommand": self.subcommand,
            "config_hash": self.hash,
            "config": self.config,
            "seed": self.seed,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
            "status": status,
            "outputs": self.outputs,
            "diagnostics": self.diagnostics,
        }
        path = self.dir / "manifest.json"
        atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True, default=_json_num) + "\n")
        return path
