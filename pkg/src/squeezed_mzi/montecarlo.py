"""Seeded ensembles of adaptive runs: iteration histograms and calibration.

Run ``i`` of master seed ``s`` always draws from the same Philox stream,
and BLAS is pinned to one thread, so results do not depend on how runs
are scheduled across worker processes.
"""
from __future__ import annotations

import csv
import json
import math
import multiprocessing
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import adaptive
from .adaptive import ProtocolConfig


@dataclass(frozen=True)
class RunRecord:
    index: int
    iterations_used: int
    estimate: float
    delta_theta: float
    theta_true: float
    aborted: bool
    diagnostic: str = ""
    sigmas: tuple[float, ...] = ()
    outcomes: tuple[int, ...] = ()

    @property
    def error(self) -> float:
        return abs(self.estimate - self.theta_true)


@dataclass(frozen=True)
class EnsembleResult:
    runs: int
    histogram: dict[int, int]
    mean_iterations: float
    spread_iterations: float
    coverage_68: float
    median_delta_theta: float
    aborted: int
    config: ProtocolConfig
    per_run_records: tuple[RunRecord, ...] | None = field(default=None, repr=False)

    def histogram_rows(self) -> list[tuple[int, int, float]]:
        return [(k, c, c / self.runs) for k, c in sorted(self.histogram.items())]

    def to_dict(self, include_records: bool = False) -> dict:
        out = {
            "runs": self.runs,
            "histogram": {str(k): c for k, c in sorted(self.histogram.items())},
            "mean_iterations": self.mean_iterations,
            "spread_iterations": self.spread_iterations,
            "coverage_68": self.coverage_68,
            "median_delta_theta": self.median_delta_theta,
            "aborted": self.aborted,
            "config": asdict(self.config),
        }
        if include_records and self.per_run_records is not None:
            out["per_run_records"] = [asdict(r) for r in self.per_run_records]
        return out


def _one_run(config: ProtocolConfig, index: int) -> RunRecord:
    with warnings.catch_warnings():
        # non-monotone steps are expected occasionally; they show up in the records
        warnings.simplefilter("ignore", RuntimeWarning)
        state = adaptive.run(config, adaptive.make_rng(config.seed, index))
    return RunRecord(
        index=index,
        iterations_used=state.iterations_used,
        estimate=float(state.estimate),
        delta_theta=float(state.delta_theta),
        theta_true=config.theta_true,
        aborted=state.aborted,
        diagnostic=state.diagnostic,
        sigmas=tuple(r.sigma for r in state.history),
        outcomes=tuple(r.n for r in state.history),
    )


def _run_block(args) -> list[RunRecord]:
    config, indices = args
    with threadpool_limits(limits=1):
        return [_one_run(config, i) for i in indices]


def _warm_caches(config: ProtocolConfig):
    # eigenbasis and the first-step state are shared by every run; build them
    # once so forked workers inherit them
    from .spinspace import get_space

    get_space(config.n_atoms).jy_eigen
    if config.stop_mode == "threshold":
        adaptive._channel(config.n_atoms, 1.0)
    adaptive._channel(config.n_atoms, adaptive.choose_sigma(config.n_atoms, config.delta_theta0))


def run_ensemble(
    config: ProtocolConfig, runs: int, workers: int = 1, keep_records: bool = True
) -> EnsembleResult:
    """Run ``runs`` independent adaptive protocols and aggregate by run index."""
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    with threadpool_limits(limits=1):
        _warm_caches(config)
        if workers == 1:
            records = _run_block((config, range(runs)))
        else:
            block = max(1, math.ceil(runs / (4 * workers)))
            tasks = [(config, range(i, min(i + block, runs))) for i in range(0, runs, block)]
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                records = [r for chunk in pool.map(_run_block, tasks) for r in chunk]
    records.sort(key=lambda r: r.index)
    return summarize(records, config, keep_records)


def summarize(
    records, config: ProtocolConfig, keep_records: bool = True
) -> EnsembleResult:
    records = tuple(records)
    iterations = np.array([r.iterations_used for r in records], dtype=float)
    hist = Counter(int(k) for k in iterations)
    return EnsembleResult(
        runs=len(records),
        histogram=dict(sorted(hist.items())),
        mean_iterations=float(iterations.mean()),
        spread_iterations=float(iterations.std()),
        coverage_68=float(np.mean([r.error <= r.delta_theta for r in records])),
        median_delta_theta=float(np.median([r.delta_theta for r in records])),
        aborted=sum(r.aborted for r in records),
        config=config,
        per_run_records=records if keep_records else None,
    )


@dataclass(frozen=True)
class CoverageReport:
    runs: int
    coverage_68: float
    coverage_3floor: float
    median_error: float
    median_delta_theta: float


def coverage_report(result: EnsembleResult) -> CoverageReport:
    """Calibration of the reported intervals against the true phase.

    ``coverage_3floor`` is the fraction of runs whose error is below
    3 * floor_coefficient / N.
    """
    records = result.per_run_records
    if not records:
        raise ValueError("coverage_report needs per-run records")
    errors = np.array([r.error for r in records])
    widths = np.array([r.delta_theta for r in records])
    floor = 3 * result.config.floor_coefficient / result.config.n_atoms
    return CoverageReport(
        runs=len(records),
        coverage_68=float(np.mean(errors <= widths)),
        coverage_3floor=float(np.mean(errors < floor)),
        median_error=float(np.median(errors)),
        median_delta_theta=float(np.median(widths)),
    )


def write_json(result: EnsembleResult, path, include_records: bool = False):
    with open(path, "w") as fh:
        json.dump(result.to_dict(include_records), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_histogram_csv(result: EnsembleResult, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iterations", "count", "fraction"])
        for k, c, f in result.histogram_rows():
            writer.writerow([k, c, f"{f:.17g}"])
