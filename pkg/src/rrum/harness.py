"""Replication harness for the two simulation studies.

Every (size, rho) cell is simulated ``replicates`` times and fitted once per
replicate.  Seeds for replicate ``r`` of cell ``c`` come from
``SeedSequence(seed, spawn_key=(c, r))`` so any single replicate can be
rerun in isolation and results do not depend on the worker count.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .analysis import delta_alpha
from .errors import ValidationError
from .fixtures import STUDY_QMATRIX, builtin_qmatrix
from .patterns import QMatrix
from .sampler import ChainConfig, run_chain
from .simulator import SimConfig, exchangeable_correlation, simulate

log = logging.getLogger(__name__)

WORKERS_ENV = "RRUM_WORKERS"


@dataclass(frozen=True)
class StudySettings:
    study: str = "I"
    sizes: tuple[int, ...] = (500,)
    rhos: tuple[float, ...] = (0.1, 0.3, 0.5)
    replicates: int = 5
    n_iter: int = 3500
    burn_in: int = 1000
    delta: float = 0.052
    g: float = 0.2
    s: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.study not in STUDY_QMATRIX:
            raise ValidationError(f"study must be one of {sorted(STUDY_QMATRIX)}, got {self.study!r}")
        if self.replicates < 1:
            raise ValidationError("need at least one replicate")
        if not self.sizes or not self.rhos:
            raise ValidationError("sizes and rhos must be non-empty")
        if any(n < 1 for n in self.sizes):
            raise ValidationError("sample sizes must be >= 1")
        K = builtin_qmatrix(STUDY_QMATRIX[self.study]).n_attributes
        for rho in self.rhos:
            exchangeable_correlation(K, rho)
        ChainConfig(n_iter=self.n_iter, burn_in=self.burn_in, delta=self.delta)

    @property
    def qmatrix(self) -> QMatrix:
        return builtin_qmatrix(STUDY_QMATRIX[self.study])


def default_workers() -> int:
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def replicate_seeds(seed: int, cell: int, replicate: int) -> tuple[int, int]:
    """(simulation seed, chain seed) for one replicate of one cell."""
    ss = np.random.SeedSequence(seed, spawn_key=(cell, replicate))
    sim_seed, chain_seed = ss.generate_state(2, dtype=np.uint32)
    return int(sim_seed), int(chain_seed)


def run_replicate(q: QMatrix, size: int, rho: float, sim_seed: int, chain_seed: int,
                  n_iter: int, burn_in: int, delta: float, g: float = 0.2, s: float = 0.2) -> dict:
    """Simulate one data set, fit it, and score attribute recovery."""
    data = simulate(SimConfig(size, q, rho, g=g, s=s, seed=sim_seed))
    draws = run_chain(data.responses, q, ChainConfig(n_iter=n_iter, burn_in=burn_in, delta=delta, seed=chain_seed))
    score = delta_alpha(draws.alpha_mean(), data.alpha).delta_alpha
    return {
        "delta_alpha": score,
        "acceptance": draws.overall_acceptance(),
        "sim_seed": sim_seed,
        "chain_seed": chain_seed,
    }


def _run_job(job):
    return run_replicate(*job)


def run_study(settings: StudySettings, workers: int = 1) -> dict:
    """Mean delta_alpha for every (size, rho) cell of a study."""
    q = settings.qmatrix
    cells = [(n, rho) for n in settings.sizes for rho in settings.rhos]
    jobs = []
    for c, (n, rho) in enumerate(cells):
        for r in range(settings.replicates):
            sim_seed, chain_seed = replicate_seeds(settings.seed, c, r)
            jobs.append((q, n, rho, sim_seed, chain_seed, settings.n_iter, settings.burn_in,
                         settings.delta, settings.g, settings.s))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = []
        for i, job in enumerate(jobs, start=1):
            results.append(_run_job(job))
            log.info("replicate %d/%d done: delta_alpha=%.4f", i, len(jobs), results[-1]["delta_alpha"])

    out_cells = []
    R = settings.replicates
    for c, (n, rho) in enumerate(cells):
        reps = results[c * R:(c + 1) * R]
        scores = [rep["delta_alpha"] for rep in reps]
        se = float(np.std(scores, ddof=1) / np.sqrt(R)) if R > 1 else 0.0
        out_cells.append({
            "size": n,
            "rho": rho,
            "delta_alpha": float(np.mean(scores)),
            "standard_error": se,
            "acceptance": float(np.mean([rep["acceptance"] for rep in reps])),
            "replicates": reps,
        })
    settings_dict = asdict(settings)
    settings_dict["sizes"] = list(settings.sizes)
    settings_dict["rhos"] = list(settings.rhos)
    return {
        "study": settings.study,
        "sizes": list(settings.sizes),
        "rhos": list(settings.rhos),
        "cells": out_cells,
        "settings": settings_dict,
    }
