"""Bundled Q-matrices and published reference values.

``sim1`` is the balanced 30 x 5 Q-matrix of the first simulation study,
``sim2`` the 37 x 9 incomplete reading-comprehension Q-matrix of the
second, and ``ecpe`` the 28 x 3 grammar-section Q-matrix of the ECPE data.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .patterns import QMatrix, load_matrix_csv

BUILTIN_QMATRICES = {
    "sim1": "qmatrix_sim1.csv",
    "sim2": "qmatrix_sim2.csv",
    "ecpe": "qmatrix_ecpe.csv",
}
STUDY_QMATRIX = {"I": "sim1", "II": "sim2"}


def data_path(name: str) -> Path:
    return Path(str(resources.files("rrum") / "data" / name))


def builtin_qmatrix(name: str) -> QMatrix:
    if name not in BUILTIN_QMATRICES:
        raise ValidationError(f"unknown built-in Q-matrix {name!r}; choose from {sorted(BUILTIN_QMATRICES)}")
    q = load_matrix_csv(data_path(BUILTIN_QMATRICES[name]), "qmatrix")
    if name == "ecpe":
        q = QMatrix(q.entries, q.attribute_names, tuple(f"E{j + 1}" for j in range(q.n_items)))
    return q


def resolve_qmatrix(spec: str) -> QMatrix:
    """Load a Q-matrix from a built-in name or a CSV path."""
    if spec in BUILTIN_QMATRICES:
        return builtin_qmatrix(spec)
    return load_matrix_csv(spec, "qmatrix")


def qmatrix_source(spec: str) -> Path:
    """File backing a Q-matrix argument (for hashing into manifests)."""
    if spec in BUILTIN_QMATRICES:
        return data_path(BUILTIN_QMATRICES[spec])
    return Path(spec)


@lru_cache(maxsize=1)
def reference_values() -> dict:
    """Published simulation grid, ECPE classification rates and item estimates."""
    return json.loads(data_path("reference_values.json").read_text(encoding="utf-8"))


def ecpe_reference_summary(source: str = "mcmc"):
    """Published ECPE item estimates as a :class:`~rrum.analysis.ParamSummary`.

    ``source`` is ``"mcmc"`` or ``"cdm"`` (the EM baseline).
    """
    from .analysis import ParamSummary

    table = reference_values()["ecpe_items"]
    if source not in ("mcmc", "cdm"):
        raise ValidationError("source must be 'mcmc' or 'cdm'")
    block = table[source]
    q = builtin_qmatrix("ecpe")
    r = np.array([[np.nan if v is None else v for v in row] for row in block["r_star"]])
    nan_pi = np.full(q.n_items, np.nan)
    return ParamSummary(q, np.array(block["pi_star"]), nan_pi, r, np.full(r.shape, np.nan))
