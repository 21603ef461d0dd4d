"""Recovery measures, posterior summaries and chain diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import ValidationError
from .patterns import QMatrix, enumerate_patterns, patterns_to_indices
from .sampler import ACCEPTANCE_BAND, ChainDraws

GEWEKE_CRITICAL = 2.58


def round_half_up(x) -> np.ndarray:
    """Round to the nearest integer with exact halves going up."""
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


# --- attribute recovery ----------------------------------------------------


@dataclass(frozen=True)
class RecoveryReport:
    delta_alpha: float
    per_replicate: tuple[float, ...]
    config: dict = field(default_factory=dict)

    @property
    def standard_error(self) -> float:
        """Standard error of the replicate mean (0 for a single replicate)."""
        n = len(self.per_replicate)
        if n < 2:
            return 0.0
        return float(np.std(self.per_replicate, ddof=1) / np.sqrt(n))

    def to_dict(self) -> dict:
        return {
            "delta_alpha": self.delta_alpha,
            "standard_error": self.standard_error,
            "per_replicate": list(self.per_replicate),
            "config": self.config,
        }


def delta_alpha(estimates, truth, config: dict | None = None) -> RecoveryReport:
    """Mean proportion of correctly recovered attribute cells.

    ``estimates`` is one I x K matrix of mastery probabilities or a sequence
    of them (one per replicate); each is rounded before comparison.
    ``truth`` is either one matrix shared by all replicates or a matching
    sequence of matrices.
    """
    est_list = _as_matrix_list(estimates)
    truth_list = _as_matrix_list(truth)
    if len(truth_list) == 1 and len(est_list) > 1:
        truth_list = truth_list * len(est_list)
    if len(truth_list) != len(est_list):
        raise ValidationError(
            f"{len(est_list)} estimate matrices but {len(truth_list)} truth matrices"
        )
    scores = []
    for est, true in zip(est_list, truth_list):
        if est.shape != true.shape:
            raise ValidationError(f"estimate shape {est.shape} != truth shape {true.shape}")
        if np.any((est < 0) | (est > 1)):
            raise ValidationError("estimates must lie in [0, 1]")
        mismatch = np.abs(round_half_up(est) - true).sum()
        scores.append(1.0 - mismatch / true.size)
    return RecoveryReport(float(np.mean(scores)), tuple(float(s) for s in scores), dict(config or {}))


def _as_matrix_list(x) -> list[np.ndarray]:
    if isinstance(x, np.ndarray) and x.ndim == 2:
        return [x.astype(float)]
    items = [np.asarray(m, dtype=float) for m in x]
    if items and items[0].ndim == 1:
        return [np.asarray(x, dtype=float)]
    return items


# --- classification --------------------------------------------------------


@dataclass(frozen=True)
class ClassificationReport:
    rates: np.ndarray
    method: str
    n_attributes: int

    def labels(self) -> list[str]:
        return ["(" + ",".join(str(b) for b in p) + ")" for p in enumerate_patterns(self.n_attributes)]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "patterns": self.labels(),
            "rates": [float(r) for r in self.rates],
        }

    def format_table(self, row_label: str = "MCMC", extra: dict[str, Sequence[float]] | None = None) -> str:
        rows = {row_label: self.rates}
        rows.update(extra or {})
        labels = self.labels()
        width = max(len(s) for s in labels)
        name_w = max(len(n) for n in rows)
        head = " " * name_w + "  " + "  ".join(s.rjust(width) for s in labels)
        lines = [head]
        for name, rates in rows.items():
            lines.append(name.ljust(name_w) + "  " + "  ".join(f"{r:.3f}".rjust(width) for r in rates))
        return "\n".join(lines)


def classification_rates(
    draws: ChainDraws, method: Literal["modal", "rounded_mean"] = "modal"
) -> ClassificationReport:
    """Share of examinees classified into each attribute pattern.

    ``modal`` assigns each examinee its most frequently sampled pattern;
    ``rounded_mean`` rounds the posterior mastery probabilities instead.
    """
    if draws.n_draws == 0:
        raise ValidationError("no draws to classify")
    K = draws.n_attributes
    if method == "modal":
        assigned = draws.modal_patterns()
    elif method == "rounded_mean":
        assigned = patterns_to_indices(round_half_up(draws.alpha_mean()))
    else:
        raise ValidationError(f"unknown classification method {method!r}")
    counts = np.bincount(assigned, minlength=2**K)
    return ClassificationReport(counts / counts.sum(), method, K)


# --- parameter summaries ---------------------------------------------------


@dataclass(frozen=True)
class ParamSummary:
    """Posterior means and SDs of pi* and r* (NaN where q = 0)."""

    q: QMatrix
    pi_mean: np.ndarray
    pi_sd: np.ndarray
    r_mean: np.ndarray
    r_sd: np.ndarray

    def to_dict(self) -> dict:
        def cells(mat):
            return [[None if np.isnan(v) else float(v) for v in row] for row in mat]

        return {
            "items": list(self.q.item_names),
            "attributes": list(self.q.attribute_names),
            "qmatrix": self.q.entries.tolist(),
            "pi_star": {"mean": self.pi_mean.tolist(), "sd": self.pi_sd.tolist()},
            "r_star": {"mean": cells(self.r_mean), "sd": cells(self.r_sd)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParamSummary":
        q = QMatrix(np.array(d["qmatrix"]), tuple(d["attributes"]), tuple(d["items"]))

        def arr(rows):
            return np.array([[np.nan if v is None else v for v in row] for row in rows], dtype=float)

        return cls(
            q,
            np.array(d["pi_star"]["mean"], dtype=float),
            np.array(d["pi_star"]["sd"], dtype=float),
            arr(d["r_star"]["mean"]),
            arr(d["r_star"]["sd"]),
        )

    def format_table(self) -> str:
        return format_param_blocks([("MCMC", self)])


def summarize_params(draws: ChainDraws, q: QMatrix | None = None) -> ParamSummary:
    if draws.n_draws == 0:
        raise ValidationError("no draws to summarize")
    q = q or draws.q
    r_mean = np.full(q.entries.shape, np.nan)
    r_sd = np.full(q.entries.shape, np.nan)
    mask = q.mask
    if draws.r_draws.size:
        r_mean[mask] = draws.r_draws.mean(axis=0)
        r_sd[mask] = draws.r_draws.std(axis=0)
    return ParamSummary(q, draws.pi_draws.mean(axis=0), draws.pi_draws.std(axis=0), r_mean, r_sd)


def format_param_blocks(blocks: Sequence[tuple[str, ParamSummary]], diff: bool = False) -> str:
    """Item table with the Q-matrix and one pi*/r* block per source.

    With ``diff`` and exactly two blocks, a third block holds first minus
    second.
    """
    if not blocks:
        raise ValidationError("nothing to report")
    base = blocks[0][1]
    for label, s in blocks[1:]:
        if s.pi_mean.shape != base.pi_mean.shape or s.r_mean.shape != base.r_mean.shape:
            raise ValidationError(
                f"source {label!r} has {s.pi_mean.size} items, expected {base.pi_mean.size}"
            )
    cols = [(label, s.pi_mean, s.r_mean) for label, s in blocks]
    if diff and len(blocks) == 2:
        cols.append(("diff", cols[0][1] - cols[1][1], cols[0][2] - cols[1][2]))
    attrs = list(base.q.attribute_names)
    item_w = max(4, max(len(n) for n in base.q.item_names))
    cell_w = max(6, max(len(a) for a in attrs))
    q_w = max(3, max(len(a) for a in attrs))

    def fmt(v):
        return "".rjust(cell_w) if np.isnan(v) else f"{v:.3f}".rjust(cell_w)

    block_w = cell_w * (1 + len(attrs)) + len(attrs)
    top = " " * item_w + "  " + "Q-matrix".center(q_w * len(attrs) + len(attrs) - 1)
    top += "".join("  " + label.center(block_w) for label, _, _ in cols)
    head = "Item".ljust(item_w) + "  " + " ".join(a.rjust(q_w) for a in attrs)
    for _ in cols:
        head += "  " + "pi*".rjust(cell_w) + " " + " ".join(a.rjust(cell_w) for a in attrs)
    lines = [top.rstrip(), head]
    for j, name in enumerate(base.q.item_names):
        row = name.ljust(item_w) + "  " + " ".join(str(v).rjust(q_w) for v in base.q.entries[j])
        for _, pi, r in cols:
            row += "  " + fmt(pi[j]) + " " + " ".join(fmt(v) for v in r[j])
        lines.append(row.rstrip())
    return "\n".join(lines)


def format_delta_grid(grid: dict) -> str:
    """Table of mean delta_alpha with one row per sample size and one column per rho."""
    sizes, rhos = grid["sizes"], grid["rhos"]
    cells = {(c["size"], c["rho"]): c for c in grid["cells"]}
    lines = [f"Simulation {grid['study']}", "Size  " + "  ".join(f"{r:>7g}" for r in rhos)]
    for n in sizes:
        vals = []
        for r in rhos:
            c = cells.get((n, r))
            vals.append(f"{c['delta_alpha']:7.3f}" if c else "      -")
        lines.append(f"{n:<4d}  " + "  ".join(vals))
    return "\n".join(lines)


# --- diagnostics -----------------------------------------------------------


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    n = x.size
    centred = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centred, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / acov[0]


def effective_sample_size(trace) -> float:
    """ESS from Geyer's initial monotone positive sequence, capped at n."""
    x = np.asarray(trace, dtype=float)
    n = x.size
    if n < 4 or np.var(x) == 0:
        return float(n)
    rho = _autocorrelation(x)
    pairs = rho[: n - n % 2].reshape(-1, 2).sum(axis=1)
    positive = np.flatnonzero(pairs <= 0)
    pairs = pairs[: positive[0]] if positive.size else pairs
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    if tau <= 0:
        return float(n)
    return float(min(n, n / tau))


def geweke_z(trace, first: float = 0.1, last: float = 0.5) -> float:
    """Difference of early and late segment means in standard-error units.

    Each segment's mean variance is its sample variance over its ESS.
    """
    x = np.asarray(trace, dtype=float)
    n = x.size
    a = x[: max(2, int(first * n))]
    b = x[n - max(2, int(last * n)):]
    var = np.var(a, ddof=1) / effective_sample_size(a) + np.var(b, ddof=1) / effective_sample_size(b)
    diff = a.mean() - b.mean()
    if var == 0:
        return 0.0 if diff == 0 else float(np.sign(diff) * np.inf)
    return float(diff / np.sqrt(var))


@dataclass(frozen=True)
class DiagnosticsReport:
    pi_acceptance: np.ndarray
    r_acceptance: np.ndarray
    overall_acceptance: float
    pi_geweke: np.ndarray
    r_geweke: np.ndarray
    pi_ess: np.ndarray
    r_ess: np.ndarray
    flagged: tuple[str, ...]
    """Labels of traces with |z| above the critical value."""

    @property
    def acceptance_in_band(self) -> bool:
        low, high = ACCEPTANCE_BAND
        return low <= self.overall_acceptance <= high

    def to_dict(self) -> dict:
        def clean(a):
            return [None if np.isnan(v) else float(v) for v in np.ravel(a)]

        return {
            "overall_acceptance": self.overall_acceptance,
            "acceptance_band": list(ACCEPTANCE_BAND),
            "acceptance_in_band": self.acceptance_in_band,
            "pi_acceptance": clean(self.pi_acceptance),
            "r_acceptance": clean(self.r_acceptance),
            "pi_geweke_z": clean(self.pi_geweke),
            "r_geweke_z": clean(self.r_geweke),
            "pi_ess": clean(self.pi_ess),
            "r_ess": clean(self.r_ess),
            "flagged": list(self.flagged),
            "geweke_critical": GEWEKE_CRITICAL,
        }


def diagnose(draws: ChainDraws) -> DiagnosticsReport:
    """Acceptance rates, Geweke z-scores and ESS for every pi*/r* trace.

    ``r_*`` arrays follow the order of ``draws.r_draws`` columns.
    """
    if draws.n_draws == 0:
        raise ValidationError("no draws to diagnose")
    pi_rate, r_rate = draws.acceptance_rates()
    q = draws.q
    pi_z = np.array([geweke_z(t) for t in draws.pi_draws.T])
    r_z = np.array([geweke_z(t) for t in draws.r_draws.T])
    pi_ess = np.array([effective_sample_size(t) for t in draws.pi_draws.T])
    r_ess = np.array([effective_sample_size(t) for t in draws.r_draws.T])
    r_labels = [
        f"r*[{q.item_names[j]},{q.attribute_names[k]}]" for j, k in zip(*np.nonzero(q.mask))
    ]
    flagged = [f"pi*[{q.item_names[j]}]" for j in np.flatnonzero(np.abs(pi_z) > GEWEKE_CRITICAL)]
    flagged += [r_labels[i] for i in np.flatnonzero(np.abs(r_z) > GEWEKE_CRITICAL)]
    return DiagnosticsReport(
        pi_acceptance=pi_rate,
        r_acceptance=r_rate[q.mask],
        overall_acceptance=draws.overall_acceptance(),
        pi_geweke=pi_z,
        r_geweke=r_z,
        pi_ess=pi_ess,
        r_ess=r_ess,
        flagged=tuple(flagged),
    )
