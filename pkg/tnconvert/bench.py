"""Sweeps over chain sizes that reproduce the conversion tables: timings, ranks and errors per d."""

import time
from typing import IO, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field
from tqdm import tqdm

from . import __version__
from .bounds import predict_rank_bounds
from .convert import ConversionReport, tc_to_tt, tt_to_tc
from .linalg import TruncationPolicy
from .network import Topology, TensorNetwork, build
from .plan import RankSplitStrategy
from .settings import (
    BENCH_CSV_VERSION,
    BENCH_DEFAULT_EPS,
    BENCH_DEFAULT_N,
    BENCH_DEFAULT_RANK,
    BENCH_MAX_MATRIX_ENTRIES,
    DEFAULT_ORACLE_CAP,
)
from .verify import relative_error

BenchTable = Literal["tc2tt-exact", "tc2tt-approx", "tt2tc-approx", "tc2tt2tc-exact", "tc2tt2tc-approx"]

BENCH_COLUMNS = [
    "d",
    "stage",
    "time_mean",
    "time_std",
    "avg_rank_mean",
    "avg_rank_std",
    "max_rank_mean",
    "max_rank_std",
    "rel_error_mean",
    "rel_error_std",
    "error_bound_mean",
    "rank_bound_ok",
    "note",
]


class BenchConfig(BaseModel):
    """
    Options for a benchmark sweep.

    Args:
        table: Which table to reproduce.
        ds: Chain sizes to run.
        n: Physical extent of every node.
        rank: Bond rank of the generated chains.
        eps: Relative cutoff for the approximate tables.
        seeds: Number of random instances per size.
        seed: First seed.
        split: Rank split for the train to chain stage.
        budget: Wall clock budget in seconds; remaining sizes are dropped once it is used up.
        track_error_bound: Compute per-step error bounds (costs an environment sweep per truncated step).
    """

    table: BenchTable
    ds: List[int] = Field(min_length=1)
    n: int = Field(default=BENCH_DEFAULT_N, ge=1)
    rank: int = Field(default=BENCH_DEFAULT_RANK, ge=1)
    eps: float = Field(default=BENCH_DEFAULT_EPS, ge=0)
    seeds: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)
    split: RankSplitStrategy = RankSplitStrategy()
    budget: Optional[float] = Field(default=None, gt=0)
    track_error_bound: bool = True

    @property
    def policy(self) -> TruncationPolicy:
        return TruncationPolicy() if self.table.endswith("exact") else TruncationPolicy(eps=self.eps)


def _error(reference: TensorNetwork, candidate: TensorNetwork, exact: bool) -> float:
    method = "oracle" if exact and reference.total_dimension() <= DEFAULT_ORACLE_CAP else "inner"
    return relative_error(reference, candidate, method=method)


def _bound_ok(net: TensorNetwork, target: str, report: ConversionReport, split: RankSplitStrategy) -> bool:
    bounds = predict_rank_bounds(net, target, split).bounds
    return all(rank <= bounds[label] for label, rank in report.final_ranks.items())


def _run_instance(config: BenchConfig, d: int, seed: int) -> Dict[str, dict]:
    """Measurements per stage for one random chain."""
    exact = config.table.endswith("exact")
    policy = config.policy
    chain = build(Topology.chain(d), config.n, config.rank, seed=seed)
    kwargs = dict(track_error_bound=config.track_error_bound and not exact)

    started = time.perf_counter()
    train, first = tc_to_tt(chain, policy, **kwargs)
    first_time = time.perf_counter() - started
    stages = {}
    if config.table.startswith("tc2tt") and not config.table.startswith("tc2tt2tc"):
        stages["tt"] = dict(
            time=first_time,
            report=first,
            rel_error=_error(chain, train, exact),
            bound_ok=_bound_ok(chain, "tt", first, config.split),
        )
        return stages

    started = time.perf_counter()
    back, second = tt_to_tc(train, config.split, policy, **kwargs)
    second_time = time.perf_counter() - started
    if config.table == "tt2tc-approx":
        stages["tc"] = dict(
            time=second_time,
            report=second,
            rel_error=_error(train, back, exact),
            bound_ok=_bound_ok(train, "tc", second, config.split),
        )
        return stages

    stages["tt"] = dict(
        time=first_time,
        report=first,
        rel_error=_error(chain, train, exact),
        bound_ok=_bound_ok(chain, "tt", first, config.split),
    )
    stages["tc"] = dict(
        time=second_time,
        report=second,
        rel_error=_error(chain, back, exact),
        bound_ok=_bound_ok(train, "tc", second, config.split),
    )
    return stages


def _bound_or_nan(report: ConversionReport) -> float:
    return np.nan if report.cumulative_error_bound is None else report.cumulative_error_bound


def _summarize(d: int, stage: str, runs: List[dict]) -> dict:
    def stats(values):
        values = np.asarray(values, dtype=np.float64)
        return float(values.mean()), float(values.std(ddof=1)) if len(values) > 1 else 0.0

    time_mean, time_std = stats([run["time"] for run in runs])
    avg_mean, avg_std = stats([run["report"].avg_rank for run in runs])
    max_mean, max_std = stats([run["report"].max_rank for run in runs])
    err_mean, err_std = stats([run["rel_error"] for run in runs])
    return dict(
        d=d,
        stage=stage,
        time_mean=time_mean,
        time_std=time_std,
        avg_rank_mean=avg_mean,
        avg_rank_std=avg_std,
        max_rank_mean=max_mean,
        max_rank_std=max_std,
        rel_error_mean=err_mean,
        rel_error_std=err_std,
        error_bound_mean=float(np.mean([_bound_or_nan(run["report"]) for run in runs])),
        rank_bound_ok=all(run["bound_ok"] for run in runs),
        note="",
    )


def _marker(d: int, stage: str, note: str) -> dict:
    row = {column: np.nan for column in BENCH_COLUMNS}
    row.update(d=d, stage=stage, rank_bound_ok=True, note=note)
    return row


def run_bench(config: BenchConfig, progress: bool = False) -> pd.DataFrame:
    """
    Run a table sweep.

    Returns:
        One row per (d, stage) with mean and standard deviation over the seeds. Sizes whose predicted
        SVD matrices exceed the desk-scale limit get a `skipped` row; a `truncated` row marks a budget stop.
    """
    rows = []
    started = time.perf_counter()
    policy = config.policy
    for d in tqdm(config.ds, desc=config.table, disable=not progress):
        elapsed = time.perf_counter() - started
        if config.budget is not None and elapsed > config.budget:
            logger.warning(f"Bench budget of {config.budget}s used up after {elapsed:.1f}s; stopping before d={d}.")
            rows.append(_marker(d, "truncated", f"budget exceeded after {elapsed:.1f}s"))
            break
        if d < 3:
            rows.append(_marker(d, "skipped", "chains need at least 3 nodes"))
            continue
        if policy.is_exact:
            probe = build(Topology.chain(d), config.n, config.rank, fill="zeros")
            rows_, cols_ = predict_rank_bounds(probe, "tt").max_matrix
            if rows_ * cols_ > BENCH_MAX_MATRIX_ENTRIES:
                logger.warning(f"Skipping d={d}: a {rows_}x{cols_} SVD exceeds the desk-scale limit.")
                rows.append(_marker(d, "skipped", f"{rows_}x{cols_} matrix exceeds {BENCH_MAX_MATRIX_ENTRIES} entries"))
                continue

        per_stage: Dict[str, List[dict]] = {}
        for offset in range(config.seeds):
            for stage, measured in _run_instance(config, d, config.seed + offset).items():
                per_stage.setdefault(stage, []).append(measured)
        for stage, runs in per_stage.items():
            row = _summarize(d, stage, runs)
            logger.info(
                f"{config.table} d={d} {stage}: time {row['time_mean']:.3f}s, avg rank {row['avg_rank_mean']:.2f}, "
                f"max rank {row['max_rank_mean']:.0f}, rel error {row['rel_error_mean']:.2e}"
            )
            rows.append(row)
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)


def write_bench_csv(frame: pd.DataFrame, handle: IO[str], config: BenchConfig):
    """Write the table with a versioned comment header."""
    handle.write(
        f"# tnconvert-bench v{BENCH_CSV_VERSION} tnconvert={__version__} table={config.table} n={config.n} "
        f"rank={config.rank} policy={config.policy} split={config.split} seeds={config.seeds} seed={config.seed}\n"
    )
    frame.to_csv(handle, index=False, float_format="%.6g")
