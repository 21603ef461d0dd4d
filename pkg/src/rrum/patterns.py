"""Attribute-pattern indexing, Q-matrix handling and matrix CSV files.

Patterns are indexed with attribute 1 as the most significant bit, so for
K = 3 the pattern ``(1, 0, 1)`` has index 5 and ``enumerate_patterns(3)``
lists ``000, 001, 010, ..., 111`` in that order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import MatrixFileError, ValidationError

MAX_ATTRIBUTES = 20

MatrixKind = Literal["qmatrix", "responses", "attributes"]


def _as_binary(values, name="pattern") -> np.ndarray:
    arr = np.asarray(values)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValidationError(f"{name} must contain only 0/1 entries")
    return arr.astype(np.int8)


def pattern_to_index(pattern: Sequence[int]) -> int:
    """Decimal index of a binary attribute pattern (first attribute = MSB)."""
    bits = _as_binary(pattern)
    if bits.ndim != 1 or bits.size < 1:
        raise ValidationError("pattern must be a non-empty 1-D sequence")
    index = 0
    for b in bits:
        index = (index << 1) | int(b)
    return index


def index_to_pattern(index: int, n_attributes: int) -> np.ndarray:
    """Inverse of :func:`pattern_to_index`."""
    _check_n_attributes(n_attributes)
    index = int(index)
    if not 0 <= index < 2**n_attributes:
        raise ValidationError(
            f"pattern index {index} out of range [0, {2**n_attributes}) for K={n_attributes}"
        )
    shifts = np.arange(n_attributes - 1, -1, -1)
    return ((index >> shifts) & 1).astype(np.int8)


def patterns_to_indices(alpha) -> np.ndarray:
    """Row-wise :func:`pattern_to_index` for an I x K attribute matrix."""
    bits = _as_binary(alpha, "attribute matrix")
    if bits.ndim != 2:
        raise ValidationError("attribute matrix must be 2-D")
    weights = 1 << np.arange(bits.shape[1] - 1, -1, -1, dtype=np.int64)
    return bits.astype(np.int64) @ weights


def indices_to_patterns(indices, n_attributes: int) -> np.ndarray:
    """Row-wise :func:`index_to_pattern`; returns an I x K int8 matrix."""
    _check_n_attributes(n_attributes)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= 2**n_attributes):
        raise ValidationError(f"pattern indices out of range for K={n_attributes}")
    shifts = np.arange(n_attributes - 1, -1, -1)
    return ((idx[..., None] >> shifts) & 1).astype(np.int8)


def enumerate_patterns(n_attributes: int) -> np.ndarray:
    """All 2^K patterns as an M x K matrix, row m holding the pattern with index m."""
    _check_n_attributes(n_attributes)
    return indices_to_patterns(np.arange(2**n_attributes), n_attributes)


def _check_n_attributes(n_attributes: int) -> None:
    if not 1 <= int(n_attributes) <= MAX_ATTRIBUTES:
        raise ValidationError(
            f"number of attributes must be in [1, {MAX_ATTRIBUTES}], got {n_attributes}"
        )


@dataclass(frozen=True)
class CompletenessReport:
    complete: bool
    missing: tuple[int, ...]
    """0-based attributes with no single-attribute item."""

    def __bool__(self) -> bool:
        return self.complete


@dataclass(frozen=True)
class QMatrix:
    """Binary J x K item-by-attribute incidence matrix.

    Every item must require at least one attribute and K is capped at
    ``MAX_ATTRIBUTES`` because samplers enumerate all 2^K patterns.
    """

    entries: np.ndarray
    attribute_names: tuple[str, ...] = field(default=())
    item_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        q = _as_binary(self.entries, "Q-matrix")
        if q.ndim != 2 or q.shape[0] < 1:
            raise ValidationError("Q-matrix must be a non-empty 2-D matrix")
        _check_n_attributes(q.shape[1])
        empty = np.flatnonzero(q.sum(axis=1) == 0)
        if empty.size:
            raise ValidationError(
                f"Q-matrix rows {[int(j) + 1 for j in empty]} require no attribute"
            )
        q.setflags(write=False)
        object.__setattr__(self, "entries", q)
        J, K = q.shape
        attrs = tuple(self.attribute_names) or tuple(f"A{k + 1}" for k in range(K))
        items = tuple(self.item_names) or tuple(f"{j + 1}" for j in range(J))
        if len(attrs) != K:
            raise ValidationError(f"expected {K} attribute names, got {len(attrs)}")
        if len(items) != J:
            raise ValidationError(f"expected {J} item names, got {len(items)}")
        object.__setattr__(self, "attribute_names", attrs)
        object.__setattr__(self, "item_names", items)

    @property
    def n_items(self) -> int:
        return self.entries.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.entries.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return self.entries.astype(bool)

    def __eq__(self, other):
        if not isinstance(other, QMatrix):
            return NotImplemented
        return (
            np.array_equal(self.entries, other.entries)
            and self.attribute_names == other.attribute_names
            and self.item_names == other.item_names
        )

    __hash__ = None


def check_complete(q: QMatrix) -> CompletenessReport:
    """Whether every attribute has an item that requires only that attribute."""
    entries = q.entries
    solo_rows = entries[entries.sum(axis=1) == 1]
    covered = solo_rows.any(axis=0) if solo_rows.size else np.zeros(q.n_attributes, bool)
    missing = tuple(int(k) for k in np.flatnonzero(~covered))
    return CompletenessReport(complete=not missing, missing=missing)


def validate_responses(y, q: QMatrix | None = None) -> np.ndarray:
    """Validate an I x J binary response matrix, optionally against a Q-matrix."""
    y = _as_binary(y, "response matrix")
    if y.ndim != 2:
        raise ValidationError("response matrix must be 2-D")
    if q is not None and y.shape[1] != q.n_items:
        raise ValidationError(
            f"response matrix has {y.shape[1]} columns but Q-matrix has {q.n_items} items"
        )
    return y


# --- CSV files -------------------------------------------------------------


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv_rows(path) -> tuple[list[str] | None, list[list[str]]]:
    """Rows of a CSV file plus the header row when the first row is non-numeric."""
    path = Path(path)
    if not path.is_file():
        raise MatrixFileError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [[c.strip() for c in row] for row in csv.reader(fh) if any(c.strip() for c in row)]
    if not rows:
        raise MatrixFileError(f"{path}: file is empty")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header, rows = rows[0], rows[1:]
        if not rows:
            raise MatrixFileError(f"{path}: header row but no data rows")
    return header, rows


def load_matrix_csv(path, kind: MatrixKind = "responses", *, id_column: bool = False):
    """Load a 0/1 matrix from CSV.

    A first row containing any non-numeric cell is treated as a header.  With
    ``id_column`` the first column is dropped (e.g. examinee ids).  Returns a
    :class:`QMatrix` for ``kind="qmatrix"`` (header cells become attribute
    names) and an int8 array otherwise.
    """
    if kind not in ("qmatrix", "responses", "attributes"):
        raise ValidationError(f"unknown matrix kind {kind!r}")
    header, rows = read_csv_rows(path)
    if id_column:
        header = header[1:] if header else header
        row_ids = [r[0] for r in rows]
        rows = [r[1:] for r in rows]
    width = len(header) if header else len(rows[0])
    data = np.empty((len(rows), width), dtype=np.int8)
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise MatrixFileError(f"{path}: row {i} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row, start=1):
            if cell not in ("0", "1"):
                try:
                    value = float(cell)
                except ValueError:
                    value = None
                if value not in (0.0, 1.0):
                    raise MatrixFileError(f"{path}: row {i}, column {j}: {cell!r} is not 0/1")
                cell = str(int(value))
            data[i - 1, j - 1] = int(cell)
    if kind == "qmatrix":
        items = tuple(row_ids) if id_column else ()
        return QMatrix(data, attribute_names=tuple(header or ()), item_names=items)
    return data


def save_matrix_csv(matrix, path, header: Sequence[str] | None = None) -> None:
    """Write a 0/1 matrix (or :class:`QMatrix`) as comma-separated integers."""
    if isinstance(matrix, QMatrix):
        if header is None and not all(n == f"A{k + 1}" for k, n in enumerate(matrix.attribute_names)):
            header = matrix.attribute_names
        matrix = matrix.entries
    arr = _as_binary(matrix, "matrix")
    if arr.ndim != 2:
        raise ValidationError("matrix must be 2-D")
    lines = []
    if header is not None:
        lines.append(",".join(header))
    lines.extend(",".join(str(int(v)) for v in row) for row in arr)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
