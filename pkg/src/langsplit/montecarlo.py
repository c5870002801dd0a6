"""Reproducible path generation and parallel ensemble statistics.

Per-path randomness is derived by hashing (master seed, path index) into an
independent stream, so any subset of paths can be regenerated in any order,
on any worker layout, with identical results.  Ensemble reductions always
run in fixed path-index order, which makes the reported statistics
bit-identical for every worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonIntegralGrid, NonIntegralRatio

__all__ = [
    "SeedPolicy",
    "BrownianGrid",
    "EnsembleReport",
    "generate_grid",
    "increment_matrix",
    "coarsen",
    "coarsen_increments",
    "run_ensemble",
    "default_workers",
]

WORKERS_ENV = "LANGSPLIT_WORKERS"


def default_workers() -> int:
    """Worker count from the environment (``LANGSPLIT_WORKERS``), default 1."""
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SeedPolicy:
    """Counter-based per-path seeding.

    ``path_seed(i)`` is a pure hash of (master_seed, i); distinct indices
    give statistically independent streams and the mapping never depends on
    call order.
    """

    master_seed: int

    def path_seed(self, path_index: int) -> int:
        ss = np.random.SeedSequence((self.master_seed, path_index))
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    def path_seeds(self, n_paths: int, start: int = 0) -> np.ndarray:
        return np.array([self.path_seed(i) for i in range(start, start + n_paths)],
                        dtype=np.uint64)


@dataclass
class BrownianGrid:
    """Fine-resolution Wiener increments for one path.

    ``increments[k]`` is N(0, tau_f); the grid spans exactly
    ``len(increments) * tau_f``.  Regenerating from the same ``path_seed``
    reproduces the grid bit for bit.
    """

    tau_f: float
    increments: np.ndarray
    path_seed: int

    @property
    def horizon(self) -> float:
        return self.increments.shape[0] * self.tau_f


def _fine_count(T: float, tau_f: float) -> int:
    n = int(round(T / tau_f))
    if n < 1 or abs(n * tau_f - T) > 1e-9 * max(T, tau_f):
        raise NonIntegralGrid(
            f"horizon {T} is not an integer multiple of fine spacing {tau_f}")
    return n


def generate_grid(T: float, tau_f: float, path_seed: int) -> BrownianGrid:
    """Independent N(0, tau_f) increments spanning ``[0, T]``, seed-deterministic."""
    n = _fine_count(T, tau_f)
    rng = np.random.default_rng(path_seed)
    inc = rng.standard_normal(n) * np.sqrt(tau_f)
    return BrownianGrid(tau_f=tau_f, increments=inc, path_seed=path_seed)


def increment_matrix(T: float, tau_f: float,
                     path_seeds: Sequence[int]) -> np.ndarray:
    """Stack per-path grids into a ``(n_fine, n_paths)`` matrix.

    Column ``i`` equals ``generate_grid(T, tau_f, path_seeds[i]).increments``.
    """
    n = _fine_count(T, tau_f)
    out = np.empty((n, len(path_seeds)))
    root = np.sqrt(tau_f)
    for i, s in enumerate(path_seeds):
        out[:, i] = np.random.default_rng(s).standard_normal(n) * root
    return out


def coarsen_increments(increments: np.ndarray, ratio: int) -> np.ndarray:
    """Block-sum fine increments (time axis first) into coarse increments."""
    inc = np.asarray(increments)
    n = inc.shape[0]
    if ratio < 1 or n % ratio != 0:
        raise NonIntegralRatio(
            f"{n} fine increments do not split into blocks of {ratio}")
    return inc.reshape((n // ratio, ratio) + inc.shape[1:]).sum(axis=1)


def coarsen(grid: BrownianGrid, tau: float) -> np.ndarray:
    """Coarse increments of ``grid`` at step ``tau``; exactly Brownian-consistent.

    The k-th coarse increment is the sum of the k-th block of fine
    increments, so the coarse path is the same Wiener path sampled coarser.
    """
    ratio = int(round(tau / grid.tau_f))
    if abs(ratio * grid.tau_f - tau) > 1e-9 * tau:
        raise NonIntegralRatio(
            f"coarse step {tau} is not an integer multiple of {grid.tau_f}")
    return coarsen_increments(grid.increments, ratio)


@dataclass
class EnsembleReport:
    """Statistics of a per-path job over an ensemble.

    ``estimates``/``std_errors`` are per output component (a scalar job has
    one component); ``taus`` labels components when the job reports one
    value per step-size level.
    """

    n_paths: int
    estimates: np.ndarray
    std_errors: np.ndarray
    taus: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    @property
    def estimate(self) -> float:
        return float(self.estimates.reshape(-1)[0])

    @property
    def std_error(self) -> float:
        return float(self.std_errors.reshape(-1)[0])


def run_ensemble(job: Callable[[int], object], n_paths: int,
                 seeds: SeedPolicy, workers: Optional[int] = None,
                 taus=None, metadata: Optional[dict] = None) -> EnsembleReport:
    """Evaluate ``job(path_seed)`` over ``n_paths`` independent paths.

    The job must be pure given its path seed; it may return a scalar or a
    fixed-length 1-D array.  Results are accumulated into a buffer indexed
    by path and reduced in fixed order, so the report does not depend on
    ``workers`` (default: the ``LANGSPLIT_WORKERS`` environment variable,
    else 1).  The first per-path failure is re-raised annotated with its
    path index.
    """
    if n_paths < 2:
        raise ValueError("ensembles need n_paths >= 2")
    if workers is None:
        workers = default_workers()
    path_seeds = seeds.path_seeds(n_paths)

    results = [None] * n_paths

    def run_one(i):
        results[i] = np.atleast_1d(np.asarray(job(int(path_seeds[i])), dtype=float))

    def annotate(exc, i):
        # Keep the original exception type; just attach the failing path.
        try:
            exc.path_index = i
        except Exception:
            pass
        exc.args = (f"path {i}: {exc.args[0]}" if exc.args else f"path {i}",
                    *exc.args[1:])
        return exc

    if workers <= 1:
        for i in range(n_paths):
            try:
                run_one(i)
            except Exception as exc:
                raise annotate(exc, i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [(pool.submit(run_one, i), i) for i in range(n_paths)]
            for fut, i in futures:
                try:
                    fut.result()
                except Exception as exc:
                    raise annotate(exc, i)

    values = np.stack(results, axis=0)
    mean = values.mean(axis=0)
    std_err = values.std(axis=0, ddof=1) / np.sqrt(n_paths)
    return EnsembleReport(
        n_paths=n_paths, estimates=mean, std_errors=std_err,
        taus=None if taus is None else np.asarray(taus, dtype=float),
        metadata=dict(metadata or {}))
