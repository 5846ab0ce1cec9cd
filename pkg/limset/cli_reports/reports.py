"""
Run artifacts: the run manifest, JSON and CSV writers, and static SVG plots.

Result files depend on the resolved config only. Anything that changes between two
runs of the same config (timestamps, worker count, wall time) goes into the manifest.
"""

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import matplotlib
import numpy as np
from loguru import logger

from config.base import Settings
from config.utils import settings_document, settings_hash
from limset import __version__
from limset.criteria_engine.predicted import Ellipsoid, PointCloud, PredictedSets
from limset.errors import InputError
from limset.heavy_tail_models.base import StarSet
from limset.sumsim.cluster import ClusterReport

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids inside the SVG so equal figures give equal bytes
matplotlib.rcParams["svg.hashsalt"] = "limset"
matplotlib.rcParams["svg.fonttype"] = "path"

MANIFEST_NAME = "manifest.json"
SNAPSHOT_PLOT_LIMIT = 12


def jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings 'inf', '-inf' and 'nan'."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(data: Any) -> str:
    return json.dumps(jsonable(data), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: Path, data: Any) -> Path:
    path.write_text(dumps(data), encoding="utf-8")
    return path


def table_csv(header: list[str], rows: Iterable[Iterable[Any]]) -> str:
    """Comma-separated, '.' decimal, mandatory header; floats written with repr."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def read_table_csv(text: str) -> tuple[list[str], list[list[str]]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0]:
        raise InputError("CSV has no header row")
    header = rows[0]
    body = [r for r in rows[1:] if r]
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} cells, got {len(r)}")
    return header, body


def write_text(path: Path, text: str) -> Path:
    # newline="" keeps "\n" on every platform
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    return path


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_hash(settings: Settings, command: str) -> str:
    return hashlib.sha256(f"{command}:{settings_hash(settings)}".encode("utf-8")).hexdigest()[:16]


def default_run_dir(settings: Settings, command: str) -> Path:
    """<runs_dir>/<hash of command and resolved config>."""
    return Path(settings.output.runs_dir) / run_hash(settings, command)


@dataclass
class RunManifest:
    command: str
    config_hash: str
    config: dict
    seeds: list[int]
    version: str = __version__
    started_at: str = ""
    finished_at: str = ""
    workers: int = 1
    files: dict[str, str] = field(default_factory=dict)
    root: Path | None = field(default=None, repr=False)
    verdicts: dict[str, Any] = field(default_factory=dict)
    exit_code: int = 0

    @classmethod
    def begin(
        cls, command: str, settings: Settings, seeds: list[int], root: Path, workers: int = 1
    ) -> "RunManifest":
        return cls(
            command=command,
            config_hash=settings_hash(settings),
            config=settings_document(settings),
            seeds=seeds,
            started_at=_now(),
            workers=workers,
            root=root,
        )

    def record(self, path: Path | None) -> None:
        if path is None:
            return
        name = path.relative_to(self.root).as_posix() if self.root else path.name
        self.files[name] = file_digest(path)

    def finish(self, verdicts: dict[str, Any], exit_code: int) -> Path:
        self.verdicts = verdicts
        self.exit_code = exit_code
        self.finished_at = _now()
        path = write_json(self.root / MANIFEST_NAME, self.to_json())
        logger.info(f"manifest written to {path}")
        return path

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "config": self.config,
            "seeds": self.seeds,
            "version": self.version,
            "timestamps": {"started": self.started_at, "finished": self.finished_at},
            "workers": self.workers,
            "files": dict(sorted(self.files.items())),
            "verdicts": self.verdicts,
            "exit_code": self.exit_code,
        }


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _save_svg(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _draw_lower_set(ax, lower) -> None:
    if isinstance(lower, Ellipsoid):
        b = lower.boundary()
        b = np.vstack([b, b[:1]])
        ax.plot(b[:, 0], b[:, 1], color="tab:red", lw=1.2, label="A")
    elif isinstance(lower, StarSet):
        for i, seg in enumerate(lower.boundary_points()):
            ax.plot(seg[:, 0], seg[:, 1], color="tab:red", lw=1.5, label="A" if i == 0 else None)
    elif isinstance(lower, PointCloud):
        ax.scatter(lower.points[:, 0], lower.points[:, 1], s=14, marker="x", color="tab:red", label="A (members)")


def plot_cluster_svg(report: ClusterReport, predicted: PredictedSets | None, path: Path) -> Path | None:
    """Scatter of S_n / c_n over the tail window, the retained net, and the predicted A and box."""
    if report.dim != 2:
        logger.debug(f"cluster scatter skipped for d={report.dim}")
        return None
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.scatter(report.points[:, 0], report.points[:, 1], s=4, color="0.7", label="S_n / c_n")
    ax.scatter(report.net[:, 0], report.net[:, 1], s=10, color="tab:blue", label=f"net (delta={report.delta:g})")
    if predicted is not None:
        _draw_lower_set(ax, predicted.lower)
        a1, a2 = predicted.upper_box
        ax.plot([-a1, a1, a1, -a1, -a1], [-a2, -a2, a2, a2, -a2], ls="--", color="tab:green", lw=1, label="alpha box")
    ax.set_aspect("equal")
    ax.axhline(0.0, color="0.85", lw=0.5)
    ax.axvline(0.0, color="0.85", lw=0.5)
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(f"tail window n >= {report.burn_in}, {report.replicas} replica(s)")
    return _save_svg(fig, path)


def plot_snapshots_svg(report: ClusterReport, path: Path, limit: int = SNAPSHOT_PLOT_LIMIT) -> Path | None:
    """Coordinates of the first `limit` net functions against t."""
    if not report.snapshot_net:
        return None
    fig, axes = plt.subplots(report.dim, 1, figsize=(7, 2.5 * report.dim), squeeze=False, sharex=True)
    for f in report.snapshot_net[:limit]:
        for i, ax in enumerate(axes[:, 0]):
            ax.plot(f.nodes, f.values[:, i], lw=0.8)
    for i, ax in enumerate(axes[:, 0]):
        ax.set_ylabel(f"coordinate {i + 1}")
    axes[-1, 0].set_xlabel("t")
    axes[0, 0].set_title(f"{min(limit, len(report.snapshot_net))} of {len(report.snapshot_net)} net functions")
    return _save_svg(fig, path)
