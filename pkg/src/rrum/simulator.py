"""Correlated-attribute data generation for simulation studies.

Attributes come from a Gaussian copula with exchangeable correlation ``rho``:
standard-normal scores are mixed through the upper Cholesky factor of the
correlation matrix, and attribute ``k`` (1-based) is mastered when the
score's normal CDF is at least ``k / (K + 1)``.  Responses are then drawn
from the reduced RUM with constant guess and slip levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DecompositionError, ValidationError
from .model import ItemParams, params_from_slip_guess, r_star_from_slip_guess
from .patterns import QMatrix, validate_responses


def normal_cdf(x):
    """Standard normal CDF."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def normal_quantile(p):
    """Inverse standard normal CDF; ``p`` must lie in (0, 1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)) or np.any(np.isnan(p_arr)):
        raise ValidationError("normal quantile requires p strictly inside (0, 1)")
    out = special.ndtri(p_arr)
    return float(out) if np.ndim(out) == 0 else out


def exchangeable_correlation(n_attributes: int, rho: float) -> np.ndarray:
    """K x K matrix with unit diagonal and ``rho`` off the diagonal.

    Raises ValidationError unless ``-1/(K-1) < rho < 1``, the positive
    definiteness range for this form.
    """
    K = int(n_attributes)
    if K < 1:
        raise ValidationError("need at least one attribute")
    lower = -1.0 / (K - 1) if K > 1 else -np.inf
    if not (lower < rho < 1.0):
        raise ValidationError(
            f"rho={rho} gives a non positive-definite correlation matrix for K={K}; "
            f"need {lower:.6g} < rho < 1"
        )
    sigma = np.full((K, K), float(rho))
    np.fill_diagonal(sigma, 1.0)
    return sigma


def choleski_upper(sigma) -> np.ndarray:
    """Upper-triangular ``U`` with ``U.T @ U == sigma``.

    Plain Cholesky-Banachiewicz on the transpose; raises DecompositionError
    naming the (1-based) pivot that is not positive.
    """
    a = np.array(sigma, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12):
        raise ValidationError("matrix must be symmetric")
    n = a.shape[0]
    u = np.zeros_like(a)
    for i in range(n):
        pivot = a[i, i] - u[:i, i] @ u[:i, i]
        if pivot <= 0.0:
            raise DecompositionError(
                f"matrix is not positive definite: pivot {i + 1} is {pivot:.6g}", pivot=i + 1
            )
        u[i, i] = np.sqrt(pivot)
        u[i, i + 1:] = (a[i, i + 1:] - u[:i, i] @ u[:i, i + 1:]) / u[i, i]
    return u


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulation_streams(seed) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (attributes, responses) generators derived from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    attr_ss, resp_ss = ss.spawn(2)
    return np.random.default_rng(attr_ss), np.random.default_rng(resp_ss)


@dataclass(frozen=True)
class SimConfig:
    n_examinees: int
    q: QMatrix
    rho: float
    g: float = 0.2
    s: float = 0.2
    seed: int | None = None

    def __post_init__(self):
        if int(self.n_examinees) < 1:
            raise ValidationError(f"number of examinees must be >= 1, got {self.n_examinees}")
        exchangeable_correlation(self.q.n_attributes, self.rho)
        r_star_from_slip_guess(self.g, self.s)


@dataclass(frozen=True)
class SimulatedData:
    alpha: np.ndarray
    responses: np.ndarray
    params: ItemParams | None
    config: SimConfig = field(repr=False)


def generate_attributes(config: SimConfig, rng=None) -> np.ndarray:
    """I x K binary attribute matrix drawn through the Gaussian copula.

    ``rng`` defaults to the attribute stream of ``config.seed``.
    """
    if rng is None:
        rng = simulation_streams(config.seed)[0]
    return correlated_attributes(config.n_examinees, config.q.n_attributes, config.rho, rng)


def correlated_attributes(n_examinees: int, n_attributes: int, rho: float, rng=None) -> np.ndarray:
    rng = _generator(rng)
    K = n_attributes
    upper = choleski_upper(exchangeable_correlation(K, rho))
    scores = rng.standard_normal((n_examinees, K)) @ upper
    cdf = normal_cdf(scores)
    thresholds = np.arange(1, K + 1) / (K + 1)
    return (cdf >= thresholds).astype(np.int8)


def correct_probabilities(alpha, q: QMatrix, g=0.2, s=0.2) -> np.ndarray:
    """I x J correct-response probabilities from guess/slip levels.

    Boundary values ``g = 0`` or ``s = 0`` are allowed here, giving a
    deterministic response model.
    """
    J, K = q.entries.shape
    g = np.broadcast_to(np.asarray(g, dtype=float), (J, K))
    s = np.broadcast_to(np.asarray(s, dtype=float), (J, K))
    mask = q.mask
    r = np.ones((J, K))
    r[mask] = r_star_from_slip_guess(g[mask], s[mask])
    pi = np.prod(np.where(mask, 1.0 - s, 1.0), axis=1)
    alpha = np.asarray(alpha)
    lacking = (alpha[:, None, :] == 0) & mask[None, :, :]
    return pi[None, :] * np.prod(np.where(lacking, r[None, :, :], 1.0), axis=2)


def generate_responses(alpha, q: QMatrix, g=0.2, s=0.2, seed=None) -> np.ndarray:
    """Binary responses with ``y_ij = 1`` iff a uniform draw is ``<= P_ij``."""
    alpha = np.asarray(alpha)
    if alpha.ndim != 2 or alpha.shape[1] != q.n_attributes:
        raise ValidationError(
            f"attribute matrix shape {alpha.shape} incompatible with K={q.n_attributes}"
        )
    p = correct_probabilities(alpha, q, g, s)
    u = _generator(seed).random(p.shape)
    return (u <= p).astype(np.int8)


def simulate(config: SimConfig) -> SimulatedData:
    """Attributes and responses for one replicate, deterministic in ``config.seed``."""
    attr_rng, resp_rng = simulation_streams(config.seed)
    alpha = generate_attributes(config, attr_rng)
    y = validate_responses(generate_responses(alpha, config.q, config.g, config.s, resp_rng), config.q)
    try:
        params = params_from_slip_guess(config.q, config.g, config.s)
    except ValidationError:
        params = None  # boundary g/s: parameters sit on the edge of (0, 1)
    return SimulatedData(alpha=alpha, responses=y, params=params, config=config)
