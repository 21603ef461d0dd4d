"""Reduced RUM measurement model.

The probability that examinee ``i`` answers item ``j`` correctly is::

    P_ij = pi_j * prod_k r_jk ** ((1 - alpha_ik) * q_jk)

``pi_j`` is the success probability of an examinee holding every attribute
the item requires, and ``r_jk`` in (0, 1) is the multiplicative penalty for
lacking attribute ``k``.  All likelihoods are evaluated in log space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MonotonicityError, ValidationError
from .patterns import QMatrix, enumerate_patterns

# Probabilities are clipped to [PROB_CLAMP, 1 - PROB_CLAMP] before taking logs.
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class ItemParams:
    """Item parameters of the reduced RUM.

    ``r_star`` is a J x K array holding NaN wherever the Q-matrix entry is 0;
    those cells are never read.
    """

    pi_star: np.ndarray
    r_star: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi_star, dtype=float)
        r = np.array(self.r_star, dtype=float)
        if pi.ndim != 1 or r.ndim != 2 or r.shape[0] != pi.shape[0]:
            raise ValidationError(f"shape mismatch: pi_star {pi.shape}, r_star {r.shape}")
        if not np.all((pi > 0) & (pi < 1)):
            raise ValidationError("pi_star must lie strictly inside (0, 1)")
        defined = ~np.isnan(r)
        if not np.all((r[defined] > 0) & (r[defined] < 1)):
            raise ValidationError("r_star must lie strictly inside (0, 1)")
        pi.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "pi_star", pi)
        object.__setattr__(self, "r_star", r)

    @classmethod
    def from_arrays(cls, q: QMatrix, pi_star, r_star) -> "ItemParams":
        """Build parameters, masking ``r_star`` by the Q-matrix.

        ``r_star`` may be a scalar or a J x K array; values where q = 0 are
        discarded.
        """
        J, K = q.entries.shape
        pi = np.broadcast_to(np.asarray(pi_star, dtype=float), (J,))
        r = np.broadcast_to(np.asarray(r_star, dtype=float), (J, K))
        r = np.where(q.mask, r, np.nan)
        if np.isnan(r[q.mask]).any():
            raise ValidationError("r_star undefined for a required attribute")
        return cls(pi.copy(), r)

    def check_against(self, q: QMatrix) -> None:
        if self.r_star.shape != q.entries.shape:
            raise ValidationError(
                f"r_star shape {self.r_star.shape} does not match Q-matrix {q.entries.shape}"
            )
        if np.isnan(self.r_star[q.mask]).any():
            raise ValidationError("r_star undefined for a required attribute")

    def log_r_masked(self, q: QMatrix) -> np.ndarray:
        """J x K matrix of ``q_jk * log r_jk`` (zero where q = 0)."""
        safe = np.where(q.mask, self.r_star, 1.0)
        return np.log(safe)


def pi_star_from_slips(s_row, q_row) -> float:
    """Success probability under full mastery: product of ``1 - s_k`` over required k."""
    s = np.broadcast_to(np.asarray(s_row, dtype=float), np.shape(q_row))
    q = np.asarray(q_row).astype(bool)
    req = s[q]
    if not np.all((req > 0) & (req < 1)):
        raise ValidationError("slip probabilities must lie in (0, 1) on required attributes")
    return float(np.prod(1.0 - req))


def r_star_from_slip_guess(g, s):
    """Penalty ``g / (1 - s)``; requires ``0 <= g < 1 - s``.

    Works elementwise on arrays.  ``g = 0`` gives the degenerate penalty 0.
    """
    g_arr = np.asarray(g, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if np.any((s_arr < 0) | (s_arr >= 1)):
        raise ValidationError("slip probability must lie in [0, 1)")
    if np.any(g_arr < 0):
        raise ValidationError("guess probability must be non-negative")
    if np.any(g_arr >= 1 - s_arr):
        raise MonotonicityError(
            f"monotonicity requires 1 - s > g (got g={g}, s={s})"
        )
    out = g_arr / (1.0 - s_arr)
    return float(out) if out.ndim == 0 else out


def params_from_slip_guess(q: QMatrix, g=0.2, s=0.2) -> ItemParams:
    """Item parameters implied by per-(item, attribute) guess and slip levels."""
    J, K = q.entries.shape
    g = np.broadcast_to(np.asarray(g, dtype=float), (J, K))
    s = np.broadcast_to(np.asarray(s, dtype=float), (J, K))
    mask = q.mask
    r = np.full((J, K), np.nan)
    r[mask] = r_star_from_slip_guess(g[mask], s[mask])
    pi = np.array([pi_star_from_slips(s[j], mask[j]) for j in range(J)])
    return ItemParams(pi, r)


def irf(pattern, q_row, pi_star_j: float, r_star_row) -> float:
    """Correct-response probability of one pattern on one item."""
    alpha = np.asarray(pattern)
    q = np.asarray(q_row).astype(bool)
    r = np.asarray(r_star_row, dtype=float)
    lacking = q & (alpha == 0)
    return float(pi_star_j * np.prod(r[lacking]))


def log_response_probabilities(alpha, q: QMatrix, params: ItemParams) -> tuple[np.ndarray, np.ndarray]:
    """``(log P, log(1 - P))`` for every row of ``alpha`` and every item.

    ``alpha`` is N x K (examinees or enumerated patterns); outputs are N x J,
    with P clipped to ``[PROB_CLAMP, 1 - PROB_CLAMP]``.
    """
    lacking = 1.0 - np.asarray(alpha, dtype=float)
    log_p = np.log(params.pi_star) + lacking @ params.log_r_masked(q).T
    return _clamped_logs(log_p)


def _clamped_logs(log_p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.clip(np.exp(log_p), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return np.log(p), np.log1p(-p)


def response_probabilities(alpha, q: QMatrix, params: ItemParams) -> np.ndarray:
    """Unclipped N x J matrix of correct-response probabilities."""
    lacking = 1.0 - np.asarray(alpha, dtype=float)
    return np.exp(np.log(params.pi_star) + lacking @ params.log_r_masked(q).T)


def bernoulli_loglik(y, log_p, log_q) -> np.ndarray:
    """Column sums of ``y log p + (1 - y) log(1 - p)``."""
    y = np.asarray(y, dtype=float)
    return (y * log_p + (1.0 - y) * log_q).sum(axis=0)


def log_likelihood_item(responses_col, alpha, q_row, pi_star_j: float, r_star_row) -> float:
    """Log-likelihood of one item's responses over all examinees."""
    x = np.asarray(responses_col, dtype=float)
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    q = np.asarray(q_row).astype(bool)
    r = np.where(q, np.asarray(r_star_row, dtype=float), 1.0)
    log_p = np.log(pi_star_j) + (1.0 - alpha) @ np.log(r)
    lp, lq = _clamped_logs(log_p)
    return float(np.sum(x * lp + (1.0 - x) * lq))


def log_likelihood_pattern(responses_row, pattern, q: QMatrix, params: ItemParams) -> float:
    """Log-likelihood of one examinee's response vector under one pattern."""
    x = np.asarray(responses_row, dtype=float)
    lp, lq = log_response_probabilities(np.atleast_2d(pattern), q, params)
    return float(np.sum(x * lp[0] + (1.0 - x) * lq[0]))


def pattern_log_likelihoods(y, q: QMatrix, params: ItemParams, patterns=None) -> np.ndarray:
    """I x M matrix of log-likelihoods of each examinee under each pattern."""
    if patterns is None:
        patterns = enumerate_patterns(q.n_attributes)
    lp, lq = log_response_probabilities(patterns, q, params)
    y = np.asarray(y, dtype=float)
    return y @ lp.T + (1.0 - y) @ lq.T


def joint_log_likelihood(y, alpha, q: QMatrix, params: ItemParams) -> float:
    """Log of the joint probability of all responses given attributes and parameters."""
    lp, lq = log_response_probabilities(alpha, q, params)
    return float(bernoulli_loglik(y, lp, lq).sum())
