"""Acceptance gate.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary ends
with one ``[PASS]`` / ``[FAIL]`` / ``[SKIP]`` line per criterion.

Opt-in extras:

* ``RRUM_FULL_SCALE=1`` adds the full-scale Simulation I cell
  (R=20, T=7000, B=2000), about four minutes on one core.
* ``RRUM_ECPE_RESPONSES=/path/to/responses.csv`` enables the ECPE check.
  ``RRUM_ECPE_QMATRIX`` overrides the bundled ECPE Q-matrix and
  ``RRUM_ECPE_ID_COLUMN=1`` drops a leading examinee-id column.
"""

from __future__ import annotations

import math
import os
import time
from itertools import product
from pathlib import Path

import numpy as np
import pytest

from rrum import ChainConfig, ItemParams, QMatrix, SimConfig, run_chain, simulate
from rrum.analysis import classification_rates, summarize_params
from rrum.cli import main
from rrum.artifacts import read_json
from rrum.fixtures import reference_values, resolve_qmatrix
from rrum.harness import StudySettings, run_study
from rrum.model import joint_log_likelihood
from rrum.patterns import load_matrix_csv, validate_responses
from rrum.sampler import sample_dirichlet

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

RHOS = (0.1, 0.3, 0.5)


def criterion(number: int, title: str):
    return pytest.mark.criterion(number, title)


# --- shared desk-scale grids -------------------------------------------------


@pytest.fixture(scope="module")
def study_one_grid():
    settings = StudySettings(study="I", sizes=(500,), rhos=RHOS, replicates=5, n_iter=3500, burn_in=1000, seed=2024)
    start = time.perf_counter()
    grid = run_study(settings)
    grid["elapsed"] = time.perf_counter() - start
    return grid


@pytest.fixture(scope="module")
def study_two_grid():
    settings = StudySettings(study="II", sizes=(500,), rhos=RHOS, replicates=5, n_iter=3500, burn_in=1000, seed=2024)
    start = time.perf_counter()
    grid = run_study(settings)
    grid["elapsed"] = time.perf_counter() - start
    return grid


def _cell(grid, rho):
    return next(c for c in grid["cells"] if math.isclose(c["rho"], rho))


# --- 1. tiny-instance oracle ---------------------------------------------------


def _direct_pattern_likelihoods(y, q, pi, r):
    """L(y_i | pattern) by explicit loops over items and attributes."""
    n, J = y.shape
    K = q.shape[1]
    patterns = list(product((0, 1), repeat=K))
    out = np.empty((n, len(patterns)))
    for i in range(n):
        for m, pattern in enumerate(patterns):
            lik = 1.0
            for j in range(J):
                p = pi[j]
                for k in range(K):
                    if q[j, k] and not pattern[k]:
                        p *= r[j, k]
                lik *= p if y[i, j] else 1.0 - p
            out[i, m] = lik
    return out


def _dirichlet_multinomial_marginals(lik):
    """Exact per-examinee posterior over 4 patterns with theta ~ Dirichlet(1) integrated out.

    p(alpha_1..alpha_I) is proportional to prod_i L_i(alpha_i) * prod_m Gamma(1 + n_m),
    where n is the pattern count vector.  Dynamic programming over count
    vectors of the other examinees gives each marginal exactly.
    """
    n, M = lik.shape
    assert M == 4
    lik = lik / lik.sum(axis=1, keepdims=True)
    size = n + 1
    n_idx = np.arange(size)
    log_fact = np.array([math.lgamma(v + 1) for v in range(size + 1)])
    marginals = np.empty_like(lik)
    for i in range(n):
        # weights over (n0, n1, n2) for the other examinees; n3 is implied
        w = np.zeros((size, size, size))
        w[0, 0, 0] = 1.0
        steps = 0
        for other in range(n):
            if other == i:
                continue
            new = w * lik[other, 3]
            new[1:, :, :] += w[:-1, :, :] * lik[other, 0]
            new[:, 1:, :] += w[:, :-1, :] * lik[other, 1]
            new[:, :, 1:] += w[:, :, :-1] * lik[other, 2]
            w = new / new.sum()
            steps += 1
        a, b, c = np.meshgrid(n_idx, n_idx, n_idx, indexing="ij")
        d = steps - a - b - c
        valid = d >= 0
        base = np.where(valid, log_fact[a] + log_fact[b] + log_fact[c] + log_fact[np.clip(d, 0, None)], -np.inf)
        scores = np.empty(M)
        for m, counts in enumerate((a, b, c, d)):
            bump = np.log(np.clip(counts, 0, None) + 1.0)
            log_terms = np.where(valid & (w > 0), base + bump + np.log(np.where(w > 0, w, 1.0)), -np.inf)
            top = log_terms.max()
            scores[m] = math.log(lik[i, m]) + top + math.log(np.exp(log_terms - top).sum())
        scores -= scores.max()
        marginals[i] = np.exp(scores) / np.exp(scores).sum()
    return marginals


@criterion(1, "tiny-instance posterior matches exact enumeration (TV <= 0.02, < 60 s)")
def test_tiny_instance_matches_exact_posterior(detail):
    q_entries = np.array([[1, 0], [0, 1], [1, 1]])
    q = QMatrix(q_entries)
    pi = np.array([0.85, 0.80, 0.90])
    r = np.array([[0.30, np.nan], [np.nan, 0.40], [0.25, 0.50]])
    params = ItemParams.from_arrays(q, pi, r)
    rng = np.random.default_rng(11)
    alpha = rng.integers(0, 2, size=(30, 2))
    p = np.array([[pi[j] * np.prod([r[j, k] for k in range(2) if q_entries[j, k] and not a[k]]) for j in range(3)]
                  for a in alpha])
    y = (rng.random((30, 3)) < p).astype(int)

    exact = _dirichlet_multinomial_marginals(_direct_pattern_likelihoods(y, q_entries, pi, r))

    start = time.perf_counter()
    draws = run_chain(y, q, ChainConfig(n_iter=101_000, burn_in=1_000, init_params=params,
                                        update_item_params=False, seed=5))
    elapsed = time.perf_counter() - start
    empirical = np.stack([np.bincount(draws.pattern_draws[:, i], minlength=4) for i in range(30)]) / draws.n_draws
    tv = 0.5 * np.abs(empirical - exact).sum(axis=1)
    detail(f"max TV {tv.max():.4f} over 30 examinees, {draws.n_draws} sweeps in {elapsed:.1f} s")
    assert tv.max() <= 0.02
    assert elapsed < 60


# --- 2. Simulation I ------------------------------------------------------------


@criterion(2, "Simulation I desk scale: mean delta_alpha >= 0.90 (I=500, rho=0.3, R=5, T=3500/B=1000)")
def test_simulation_one_desk_scale(study_one_grid, detail):
    cell = _cell(study_one_grid, 0.3)
    per_cell = study_one_grid["elapsed"] / len(study_one_grid["cells"])
    detail(f"delta_alpha {cell['delta_alpha']:.4f} +/- {cell['standard_error']:.4f}; ~{per_cell:.0f} s for the cell")
    assert cell["delta_alpha"] >= 0.90
    assert per_cell < 15 * 60


@criterion(2, "Simulation I full scale: delta_alpha = 0.925 +/- 0.015 (R=20, T=7000/B=2000; RRUM_FULL_SCALE=1)")
def test_simulation_one_full_scale(detail):
    if os.environ.get("RRUM_FULL_SCALE") != "1":
        pytest.skip("set RRUM_FULL_SCALE=1 to run the full-scale cell")
    settings = StudySettings(study="I", sizes=(500,), rhos=(0.3,), replicates=20, n_iter=7000, burn_in=2000, seed=7)
    cell = run_study(settings)["cells"][0]
    detail(f"delta_alpha {cell['delta_alpha']:.4f} +/- {cell['standard_error']:.4f}")
    assert abs(cell["delta_alpha"] - 0.925) <= 0.015


# --- 3. Simulation II -----------------------------------------------------------


@criterion(3, "Simulation II desk scale: mean delta_alpha in [0.79, 0.87] (I=500, rho=0.3, R=5)")
def test_simulation_two_desk_scale(study_two_grid, detail):
    cell = _cell(study_two_grid, 0.3)
    detail(f"delta_alpha {cell['delta_alpha']:.4f} +/- {cell['standard_error']:.4f}")
    assert 0.79 <= cell["delta_alpha"] <= 0.87


# --- 4. ordering in rho ---------------------------------------------------------


def _ordering_violations(grid):
    cells = [_cell(grid, rho) for rho in RHOS]
    bad = []
    for lo, hi in zip(cells, cells[1:]):
        se = math.hypot(lo["standard_error"], hi["standard_error"])
        if hi["delta_alpha"] < lo["delta_alpha"] - se:
            bad.append((lo["rho"], hi["rho"]))
    return cells, bad


@criterion(4, "delta_alpha non-decreasing in rho within one MC standard error (Simulation I)")
def test_ordering_in_rho_study_one(study_one_grid, detail):
    cells, bad = _ordering_violations(study_one_grid)
    detail(", ".join(f"rho={c['rho']}: {c['delta_alpha']:.4f}+/-{c['standard_error']:.4f}" for c in cells))
    assert not bad


@criterion(4, "delta_alpha non-decreasing in rho within one MC standard error (Simulation II)")
def test_ordering_in_rho_study_two(study_two_grid, detail):
    cells, bad = _ordering_violations(study_two_grid)
    detail(", ".join(f"rho={c['rho']}: {c['delta_alpha']:.4f}+/-{c['standard_error']:.4f}" for c in cells))
    assert not bad


# --- 5. acceptance band ---------------------------------------------------------


@criterion(5, "aggregate MH acceptance in [0.25, 0.40] with delta=0.052 (Simulation I desk scale)")
def test_acceptance_band(study_one_grid, detail):
    rates = [rep["acceptance"] for rep in _cell(study_one_grid, 0.3)["replicates"]]
    rate = float(np.mean(rates))
    detail(f"acceptance {rate:.3f} (replicates {min(rates):.3f}-{max(rates):.3f})")
    assert 0.25 <= rate <= 0.40


# --- 6. simulator calibration ---------------------------------------------------


@criterion(6, "rho=0, K=5, I=10000: mastery rate of attribute k = 1 - k/6 within 3 binomial SE")
def test_simulator_calibration(detail):
    q = QMatrix(np.eye(5, dtype=int))
    data = simulate(SimConfig(10_000, q, 0.0, seed=314))
    rates = data.alpha.mean(axis=0)
    expected = 1 - np.arange(1, 6) / 6
    se = np.sqrt(expected * (1 - expected) / 10_000)
    z = (rates - expected) / se
    detail("z = " + ", ".join(f"{v:+.2f}" for v in z))
    assert np.all(np.abs(z) <= 3)


# --- 7. Dirichlet sampler -------------------------------------------------------


@criterion(7, "Dirichlet coordinate means = (1+y_m)/(M+sum y) within 3 MC SE over 1e5 draws")
@pytest.mark.parametrize("counts", [np.zeros(8), np.array([5, 0, 3, 12, 0, 1, 0, 9]), np.array([400, 2, 0, 0, 30, 0, 0, 64])],
                         ids=["zeros", "small", "skewed"])
def test_dirichlet_means(counts, detail):
    rng = np.random.default_rng(99)
    draws = np.stack([sample_dirichlet(counts, rng) for _ in range(100_000)])
    a = 1 + counts
    expected = a / a.sum()
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    z = (draws.mean(axis=0) - expected) / se
    detail(f"max |z| {np.abs(z).max():.2f}")
    assert np.all(np.abs(z) <= 3)


# --- 8. likelihood kernel -------------------------------------------------------


@criterion(8, "exp(log-likelihood) = direct product within 1e-12; factorization orders agree within 1e-9")
def test_likelihood_kernel(detail):
    rng = np.random.default_rng(8)
    worst_abs = worst_order = 0.0
    for _ in range(100):
        n, J, K = rng.integers(1, 6, size=3)
        entries = rng.integers(0, 2, size=(J, K))
        entries[entries.sum(axis=1) == 0, rng.integers(K)] = 1
        q = QMatrix(entries)
        pi = rng.uniform(0.05, 0.95, J)
        r = np.where(entries == 1, rng.uniform(0.05, 0.95, (J, K)), np.nan)
        params = ItemParams.from_arrays(q, pi, r)
        alpha = rng.integers(0, 2, size=(n, K))
        y = rng.integers(0, 2, size=(n, J))

        p = np.empty((n, J))
        for i in range(n):
            for j in range(J):
                v = pi[j]
                for k in range(K):
                    if entries[j, k] and not alpha[i, k]:
                        v *= r[j, k]
                p[i, j] = v
        terms = np.where(y == 1, p, 1 - p)
        direct = 1.0
        for i in range(n):
            for j in range(J):
                direct *= terms[i, j]
        by_examinee = sum(sum(math.log(terms[i, j]) for j in range(J)) for i in range(n))
        by_item = sum(sum(math.log(terms[i, j]) for i in range(n)) for j in range(J))

        ll = joint_log_likelihood(y, alpha, q, params)
        worst_abs = max(worst_abs, abs(math.exp(ll) - direct))
        worst_order = max(worst_order, abs(by_examinee - by_item), abs(ll - by_item))
    detail(f"max |exp(ll) - product| {worst_abs:.1e}, max order gap {worst_order:.1e}")
    assert worst_abs <= 1e-12
    assert worst_order <= 1e-9


# --- 9. ECPE --------------------------------------------------------------------


@criterion(9, "ECPE: pi* within 0.02 of published MCMC for >= 26/28 items; class rates within 0.03")
def test_ecpe(detail):
    path = os.environ.get("RRUM_ECPE_RESPONSES")
    if not path:
        pytest.skip("set RRUM_ECPE_RESPONSES to the ECPE grammar responses CSV")
    q = resolve_qmatrix(os.environ.get("RRUM_ECPE_QMATRIX", "ecpe"))
    y = validate_responses(load_matrix_csv(path, "responses", id_column=os.environ.get("RRUM_ECPE_ID_COLUMN") == "1"), q)
    draws = run_chain(y, q, ChainConfig(n_iter=7000, burn_in=2000, seed=2013))
    ref = reference_values()
    pi_hat = summarize_params(draws, q).pi_mean
    close = int(np.sum(np.abs(pi_hat - np.array(ref["ecpe_items"]["mcmc"]["pi_star"])) <= 0.02))
    rates = classification_rates(draws).rates
    gap = float(np.max(np.abs(rates - np.array(ref["ecpe_classification"]["mcmc"]))))
    detail(f"{close}/28 items within 0.02; max class-rate gap {gap:.3f}")
    assert close >= 26
    assert gap <= 0.03


# --- 10. determinism ------------------------------------------------------------


def _artifacts(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.name != "manifest.json"}


@criterion(10, "simulate and fit with fixed seeds give byte-identical outputs across two runs")
def test_determinism(tmp_path, detail):
    sim_dir = tmp_path / "sim"
    fit_dir = tmp_path / "fit"
    commands = [
        ["simulate", "--qmatrix", "sim1", "-I", "300", "--rho", "0.3", "--seed", "17", "--out", str(sim_dir)],
        ["fit", "--responses", str(sim_dir / "responses.csv"), "--qmatrix", "sim1", "-T", "400", "-B", "100",
         "--seed", "23", "--truth", str(sim_dir / "attributes_true.csv"), "--out", str(fit_dir)],
    ]
    runs = []
    for _ in range(2):
        for argv in commands:
            assert main(argv) == 0
        runs.append({d: (_artifacts(d), read_json(d / "manifest.json")["outputs"]) for d in (sim_dir, fit_dir)})
    files = 0
    for d in (sim_dir, fit_dir):
        (left, left_hashes), (right, right_hashes) = runs[0][d], runs[1][d]
        assert left.keys() == right.keys()
        for name in left:
            assert left[name] == right[name], name
        assert left_hashes == right_hashes
        files += len(left)
    detail(f"{files} artifacts identical; manifests differ only in timestamps")
