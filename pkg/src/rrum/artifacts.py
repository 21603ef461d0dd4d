"""Run manifests, chain trace files and JSON helpers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .sampler import ChainDraws


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Record of one CLI invocation.

    ``outputs`` maps file names (relative to the output directory) to their
    SHA-256; timestamps are the only fields that differ between replays.
    """

    command: str
    args: dict
    seed: int | None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    started_at: str = field(default_factory=utc_now)
    finished_at: str | None = None
    version: str = __version__

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_outputs(self, out_dir, names) -> None:
        for name in names:
            self.outputs[name] = sha256_file(Path(out_dir) / name)

    def write(self, out_dir) -> Path:
        self.finished_at = utc_now()
        path = Path(out_dir) / "manifest.json"
        write_json(asdict(self), path)
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**read_json(path))


def write_trace(draws: ChainDraws, path) -> None:
    """One JSON record per stored iteration: theta, pi*, masked r*, pattern indices."""
    first = draws.config.burn_in
    with open(path, "w", encoding="utf-8") as fh:
        for n in range(draws.n_draws):
            record = {
                "iteration": first + n * draws.config.thin + 1,
                "theta": draws.theta_draws[n].tolist(),
                "pi_star": draws.pi_draws[n].tolist(),
                "r_star": draws.r_draws[n].tolist(),
                "patterns": draws.pattern_draws[n].tolist(),
            }
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def read_trace(path) -> dict[str, np.ndarray]:
    """Stack a trace file back into arrays keyed like the record fields."""
    cols: dict[str, list] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            for key, value in json.loads(line).items():
                cols.setdefault(key, []).append(value)
    return {key: np.array(values) for key, values in cols.items()}


def write_param_table_csv(summary, path) -> None:
    """Posterior means as ``item,pi_star,<attribute>...`` with blanks where q = 0."""
    q = summary.q
    lines = [",".join(["item", "pi_star", *q.attribute_names])]
    for j, item in enumerate(q.item_names):
        r = ["" if np.isnan(v) else repr(float(v)) for v in summary.r_mean[j]]
        lines.append(",".join([item, repr(float(summary.pi_mean[j])), *r]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_param_table_csv(path, q):
    """Read an external item-parameter table (e.g. an EM baseline) for ``q``.

    Expects the layout of :func:`write_param_table_csv`; r* cells are read
    only where the Q-matrix requires the attribute.
    """
    from .analysis import ParamSummary
    from .errors import MatrixFileError
    from .patterns import read_csv_rows

    header, rows = read_csv_rows(path)
    if header is None or len(header) != 2 + q.n_attributes:
        raise MatrixFileError(
            f"{path}: expected header 'item,pi_star' plus {q.n_attributes} attribute columns"
        )
    if len(rows) != q.n_items:
        raise MatrixFileError(f"{path}: {len(rows)} items but the Q-matrix has {q.n_items}")
    pi = np.empty(q.n_items)
    r = np.full(q.entries.shape, np.nan)
    for j, row in enumerate(rows):
        if len(row) != len(header):
            raise MatrixFileError(f"{path}: row {j + 1} has {len(row)} cells, expected {len(header)}")
        try:
            pi[j] = float(row[1])
            for k in range(q.n_attributes):
                if q.entries[j, k]:
                    r[j, k] = float(row[2 + k])
        except ValueError as exc:
            raise MatrixFileError(f"{path}: row {j + 1}: {exc}") from None
    nan = np.full(q.n_items, np.nan)
    return ParamSummary(q, pi, nan, r, np.full(r.shape, np.nan))
