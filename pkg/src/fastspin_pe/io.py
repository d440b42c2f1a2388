"""Report output.

Every experiment emits one JSON document with a stable key schema
(experiment, config_hash, metrics, provenance) plus CSV curves for
anything plottable. Writes go through a single sink so parallel member
execution never interleaves partial files.
"""

import json
import subprocess
import threading
from pathlib import Path

from .errors import ConfigError


def git_rev() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=10,
        )
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def report_doc(experiment: str, cfg_hash: str, metrics: dict, seeds: dict) -> dict:
    return {
        "experiment": experiment,
        "config_hash": cfg_hash,
        "metrics": metrics,
        "provenance": {"seeds": seeds, "git_rev": git_rev()},
    }


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays to python types."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


class ReportSink:
    """Serialized writer for one output directory."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self._lock = threading.Lock()
        self.written: list[Path] = []
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"output_dir: cannot create {self.out_dir}: {e}") from e

    def _record(self, path: Path):
        self.written.append(path)

    def write_json(self, name: str, doc: dict) -> Path:
        path = self.out_dir / name
        text = json.dumps(_plain(doc), indent=2, sort_keys=False)
        with self._lock:
            path.write_text(text + "\n")
            self._record(path)
        return path

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        path = self.out_dir / name
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_fmt_cell(v) for v in row))
        with self._lock:
            path.write_text("\n".join(lines) + "\n")
            self._record(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        with self._lock:
            path.write_text(text)
            self._record(path)
        return path


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def read_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
