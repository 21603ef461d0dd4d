"""Metropolis-within-Gibbs sampler for the reduced RUM.

One iteration performs, in order:

1. ``theta | alpha ~ Dirichlet(1 + pattern counts)``, built from Gamma draws;
2. ``alpha_i | theta, y_i`` for every examinee, drawn by discrete inverse
   transform sampling over all ``M = 2^K`` patterns with weights
   ``theta_m * L(y_i | pattern m)``;
3. a random-walk Metropolis update of every ``r*_jk`` with ``q_jk = 1``;
4. the same for every ``pi*_j``.

Proposals are ``Uniform(x - delta, x + delta)``; proposals outside (0, 1) are
rejected since the Beta(1, 1) prior has no mass there.  Because the item
likelihoods are separable given ``alpha``, all items are updated together
for one attribute column at a time, which is equivalent to a scalar sweep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model import PROB_CLAMP, ItemParams, pattern_log_likelihoods
from .patterns import QMatrix, enumerate_patterns, validate_responses

log = logging.getLogger(__name__)

ACCEPTANCE_BAND = (0.25, 0.40)


@dataclass(frozen=True)
class ChainConfig:
    """Settings for one chain.

    ``n_iter`` counts all iterations including the ``burn_in`` ones, so
    ``(n_iter - burn_in) // thin`` draws are stored.
    """

    n_iter: int = 7000
    burn_in: int = 2000
    delta: float = 0.052
    seed: int | None = None
    thin: int = 1
    init_pi: float = 0.8
    init_r: float = 0.5
    init_params: ItemParams | None = None
    init_patterns: np.ndarray | None = None
    update_item_params: bool = True
    tune_delta: bool = False
    tune_interval: int = 100

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ValidationError(
                f"need 0 <= burn_in < n_iter, got burn_in={self.burn_in}, n_iter={self.n_iter}"
            )
        if not 0 < self.delta < 0.5:
            raise ValidationError(f"delta must lie in (0, 0.5), got {self.delta}")
        if self.thin < 1:
            raise ValidationError(f"thin must be >= 1, got {self.thin}")
        for name in ("init_pi", "init_r"):
            if not 0 < getattr(self, name) < 1:
                raise ValidationError(f"{name} must lie in (0, 1)")
        if self.tune_interval < 1:
            raise ValidationError("tune_interval must be >= 1")

    def echo(self) -> dict:
        """JSON-friendly view of the scalar settings."""
        return {
            "n_iter": self.n_iter,
            "burn_in": self.burn_in,
            "delta": self.delta,
            "seed": self.seed,
            "thin": self.thin,
            "init_pi": self.init_pi,
            "init_r": self.init_r,
            "custom_init_params": self.init_params is not None,
            "custom_init_patterns": self.init_patterns is not None,
            "update_item_params": self.update_item_params,
            "tune_delta": self.tune_delta,
        }


@dataclass
class ChainDraws:
    """Post-burn-in output of :func:`run_chain`.

    ``r_draws`` columns follow the Q-matrix mask in row-major order
    (item 1's required attributes first).  Acceptance tallies cover every
    post-burn-in iteration, including thinned-out ones.
    """

    q: QMatrix
    pattern_draws: np.ndarray
    theta_draws: np.ndarray
    pi_draws: np.ndarray
    r_draws: np.ndarray
    accept_pi: np.ndarray
    accept_r: np.ndarray
    n_proposals: int
    delta: float
    config: ChainConfig = field(repr=False)

    @property
    def n_draws(self) -> int:
        return self.pattern_draws.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.q.n_attributes

    def r_draws_full(self) -> np.ndarray:
        """Draws of r* as an (n_draws, J, K) array with NaN where q = 0."""
        full = np.full((self.n_draws,) + self.q.entries.shape, np.nan)
        full[:, self.q.mask] = self.r_draws
        return full

    def alpha_mean(self) -> np.ndarray:
        """Posterior marginal mastery probability, I x K."""
        K = self.n_attributes
        draws = self.pattern_draws
        return np.stack(
            [((draws >> (K - 1 - k)) & 1).mean(axis=0) for k in range(K)], axis=1
        )

    def modal_patterns(self) -> np.ndarray:
        """Most frequently sampled pattern index per examinee (ties -> lowest index)."""
        M = 2**self.n_attributes
        return np.array(
            [np.bincount(col, minlength=M).argmax() for col in self.pattern_draws.T],
            dtype=np.int64,
        )

    def acceptance_rates(self) -> tuple[np.ndarray, np.ndarray]:
        """``(pi rates (J,), r rates (J, K) with NaN where q = 0)``."""
        if self.n_proposals == 0:
            return np.zeros_like(self.accept_pi, dtype=float), np.where(self.q.mask, 0.0, np.nan)
        pi_rate = self.accept_pi / self.n_proposals
        r_rate = np.where(self.q.mask, self.accept_r / self.n_proposals, np.nan)
        return pi_rate, r_rate

    def overall_acceptance(self) -> float:
        """Aggregate acceptance rate over every pi* and r* proposal."""
        total = self.n_proposals * (self.accept_pi.size + int(self.q.mask.sum()))
        if total == 0:
            return 0.0
        return float((self.accept_pi.sum() + self.accept_r.sum()) / total)

    def posterior_mean_params(self) -> ItemParams:
        r = np.full(self.q.entries.shape, np.nan)
        r[self.q.mask] = self.r_draws.mean(axis=0)
        return ItemParams(self.pi_draws.mean(axis=0), r)


# --- building blocks -------------------------------------------------------


def sample_gamma(shape, rng: np.random.Generator, size=None):
    """Gamma(shape, scale=1) draws; the sampler only needs ``shape >= 1``."""
    a = np.asarray(shape, dtype=float)
    if np.any(a < 1) or np.any(np.isnan(a)):
        raise ValidationError(f"gamma shape must be >= 1, got {shape}")
    return rng.standard_gamma(a, size=size)


def sample_dirichlet(counts, rng: np.random.Generator) -> np.ndarray:
    """Draw from Dirichlet(1 + counts) by normalizing independent Gamma draws."""
    counts = np.asarray(counts)
    if counts.ndim != 1 or np.any(counts < 0):
        raise ValidationError("counts must be a 1-D vector of non-negative integers")
    w = sample_gamma(1.0 + counts, rng)
    return w / w.sum()


def inverse_transform_sample(log_weights, rng: np.random.Generator) -> np.ndarray:
    """One category index per row of an (N, M) matrix of unnormalized log-weights.

    Each row is normalized with the log-sum-exp shift, its CDF partitions
    (0, 1), and a uniform draw selects the subinterval it lands in.
    """
    lw = np.atleast_2d(np.asarray(log_weights, dtype=float))
    with np.errstate(invalid="ignore"):
        p = np.exp(lw - lw.max(axis=1, keepdims=True))
    cdf = np.cumsum(p, axis=1)
    total = cdf[:, -1]
    if not np.all(np.isfinite(total)) or np.any(total <= 0):
        raise RuntimeError("pattern weights vanished; cannot sample")
    u = rng.random(lw.shape[0]) * total
    idx = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(idx, lw.shape[1] - 1)


def update_attributes(y, theta, params: ItemParams, q: QMatrix, rng, loglik=None) -> np.ndarray:
    """Sample each examinee's pattern index given ``theta`` and item parameters.

    ``loglik`` may carry a precomputed I x M matrix from
    :func:`rrum.model.pattern_log_likelihoods`.
    """
    theta = np.asarray(theta, dtype=float)
    if loglik is None:
        loglik = pattern_log_likelihoods(y, q, params)
    if loglik.shape[1] != theta.shape[0]:
        raise ValidationError("theta length does not match the number of patterns")
    with np.errstate(divide="ignore"):
        log_theta = np.log(theta)
    return inverse_transform_sample(loglik + log_theta, rng)


def _item_loglik(y, log_p) -> np.ndarray:
    p = np.clip(np.exp(log_p), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return (y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum(axis=0)


class _ItemState:
    """Mutable log-scale item parameters plus the cached I x J log P matrix."""

    def __init__(self, y, lacking, q: QMatrix, pi, r):
        self.y = y
        self.lacking = lacking
        self.mask = q.mask
        self.pi = np.array(pi, dtype=float)
        self.r = np.where(self.mask, r, 1.0).astype(float)
        self.log_r = np.log(self.r)
        self.refresh()

    def refresh(self):
        self.log_p = np.log(self.pi) + self.lacking @ self.log_r.T
        self.ll = _item_loglik(self.y, self.log_p)

    def set_lacking(self, lacking):
        self.lacking = lacking
        self.refresh()

    def _mh(self, items, current, delta, rng, log_p_shift):
        proposal = current + rng.uniform(-delta, delta, size=current.shape)
        log_u = np.log(rng.random(current.shape))
        inside = (proposal > 0.0) & (proposal < 1.0)
        safe = np.where(inside, proposal, current)
        dlog = np.log(safe) - np.log(current)
        new_log_p = self.log_p[:, items] + log_p_shift(dlog)
        new_ll = _item_loglik(self.y[:, items], new_log_p)
        accept = inside & (log_u < new_ll - self.ll[items])
        acc_items = items[accept]
        self.log_p[:, acc_items] = new_log_p[:, accept]
        self.ll[acc_items] = new_ll[accept]
        return safe, accept

    def sweep_r(self, delta, rng, accept_counts=None):
        accepted = np.zeros(self.mask.shape, dtype=bool)
        for k in range(self.mask.shape[1]):
            items = np.flatnonzero(self.mask[:, k])
            if items.size == 0:
                continue
            col = self.lacking[:, k:k + 1]
            new, acc = self._mh(items, self.r[items, k], delta, rng, lambda d: col * d)
            self.r[items[acc], k] = new[acc]
            self.log_r[items[acc], k] = np.log(new[acc])
            accepted[items, k] = acc
        if accept_counts is not None:
            accept_counts += accepted
        return accepted

    def sweep_pi(self, delta, rng, accept_counts=None):
        items = np.arange(self.pi.size)
        new, acc = self._mh(items, self.pi, delta, rng, lambda d: d[None, :])
        self.pi[acc] = new[acc]
        if accept_counts is not None:
            accept_counts += acc
        return acc

    def params(self) -> ItemParams:
        return ItemParams(self.pi.copy(), np.where(self.mask, self.r, np.nan))


def _state_for(y, alpha, params: ItemParams, q: QMatrix) -> _ItemState:
    y = validate_responses(y, q).astype(float)
    params.check_against(q)
    lacking = 1.0 - np.asarray(alpha, dtype=float)
    if lacking.shape != (y.shape[0], q.n_attributes):
        raise ValidationError(f"attribute matrix shape {np.shape(alpha)} does not match data")
    return _ItemState(y, lacking, q, params.pi_star, params.r_star)


def update_r_star(y, alpha, params: ItemParams, q: QMatrix, delta: float, rng):
    """One Metropolis sweep over every required ``r*_jk``.

    Returns the updated parameters and a J x K boolean acceptance mask.
    """
    state = _state_for(y, alpha, params, q)
    accepted = state.sweep_r(delta, rng)
    return state.params(), accepted


def update_pi_star(y, alpha, params: ItemParams, q: QMatrix, delta: float, rng):
    """One Metropolis sweep over every ``pi*_j``; returns parameters and a J-mask."""
    state = _state_for(y, alpha, params, q)
    accepted = state.sweep_pi(delta, rng)
    return state.params(), accepted


# --- the chain -------------------------------------------------------------


def _initial_params(q: QMatrix, config: ChainConfig) -> ItemParams:
    if config.init_params is not None:
        config.init_params.check_against(q)
        return config.init_params
    return ItemParams.from_arrays(q, config.init_pi, config.init_r)


def _tuned(delta: float, rate: float) -> float:
    low, high = ACCEPTANCE_BAND
    if rate < low:
        delta *= 0.8
    elif rate > high:
        delta *= 1.25
    return float(min(max(delta, 1e-4), 0.499))


def run_chain(y, q: QMatrix, config: ChainConfig | None = None) -> ChainDraws:
    """Run one Metropolis-within-Gibbs chain and return its stored draws."""
    config = config or ChainConfig()
    y = validate_responses(y, q).astype(float)
    n_examinees = y.shape[0]
    K = q.n_attributes
    M = 2**K
    patterns = enumerate_patterns(K)
    lacking_by_pattern = 1.0 - patterns.astype(float)
    rng = np.random.default_rng(config.seed)

    if config.init_patterns is not None:
        current = np.asarray(config.init_patterns, dtype=np.int64).copy()
        if current.shape != (n_examinees,) or current.min() < 0 or current.max() >= M:
            raise ValidationError("init_patterns must hold one valid pattern index per examinee")
    else:
        current = rng.integers(M, size=n_examinees)
    params0 = _initial_params(q, config)
    state = _ItemState(y, lacking_by_pattern[current], q, params0.pi_star, params0.r_star)
    theta = np.full(M, 1.0 / M)

    n_keep = (config.n_iter - config.burn_in) // config.thin
    pattern_dtype = np.int16 if K <= 15 else np.int32
    pattern_draws = np.empty((n_keep, n_examinees), dtype=pattern_dtype)
    theta_draws = np.empty((n_keep, M))
    pi_draws = np.empty((n_keep, q.n_items))
    n_r = int(q.mask.sum())
    r_draws = np.empty((n_keep, n_r))
    accept_pi = np.zeros(q.n_items, dtype=np.int64)
    accept_r = np.zeros(q.entries.shape, dtype=np.int64)
    window_acc = 0
    window_props = 0
    delta = config.delta

    loglik = None
    stored = 0
    for t in range(config.n_iter):
        post_burn = t >= config.burn_in
        counts = np.bincount(current, minlength=M)
        theta = sample_dirichlet(counts, rng)

        if loglik is None or config.update_item_params:
            loglik = _pattern_loglik(y, state, lacking_by_pattern)
        current = update_attributes(y, theta, None, q, rng, loglik=loglik)
        state.set_lacking(lacking_by_pattern[current])

        if config.update_item_params:
            acc_r = state.sweep_r(delta, rng, accept_r if post_burn else None)
            acc_pi = state.sweep_pi(delta, rng, accept_pi if post_burn else None)
            if config.tune_delta and not post_burn:
                window_acc += int(acc_r.sum() + acc_pi.sum())
                window_props += n_r + q.n_items
                if (t + 1) % config.tune_interval == 0:
                    delta = _tuned(delta, window_acc / window_props)
                    log.debug("iteration %d: delta tuned to %.4f", t + 1, delta)
                    window_acc = window_props = 0

        if post_burn and (t - config.burn_in) % config.thin == 0 and stored < n_keep:
            pattern_draws[stored] = current
            theta_draws[stored] = theta
            pi_draws[stored] = state.pi
            r_draws[stored] = state.r[q.mask]
            stored += 1

    return ChainDraws(
        q=q,
        pattern_draws=pattern_draws,
        theta_draws=theta_draws,
        pi_draws=pi_draws,
        r_draws=r_draws,
        accept_pi=accept_pi,
        accept_r=accept_r,
        n_proposals=(config.n_iter - config.burn_in) if config.update_item_params else 0,
        delta=delta,
        config=config,
    )


def _pattern_loglik(y, state: _ItemState, lacking_by_pattern) -> np.ndarray:
    log_p = np.log(state.pi) + lacking_by_pattern @ state.log_r.T
    p = np.clip(np.exp(log_p), PROB_CLAMP, 1.0 - PROB_CLAMP)
    lp, lq = np.log(p), np.log1p(-p)
    return y @ (lp - lq).T + lq.sum(axis=1)
