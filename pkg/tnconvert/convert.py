"""The three topology conversions and their reports."""

import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple, Union

from loguru import logger
from pydantic import BaseModel
from tqdm import tqdm

from .errors import ArgumentError, TensorNetworkError, UnsupportedOperationError
from .linalg import TruncationPolicy
from .network import Topology, TensorNetwork, cycle_order, drop_rank_one_bonds, path_order, topology_of, validate
from .plan import ConversionPlan, PlanStep, RankSplitStrategy, make_plan, source_conversion, target_kind
from .rewire import (
    Rewrite,
    StepRecord,
    apply_rewrite,
    insert_artificial_edge,
    prepare_merge_parallel_edges,
    prepare_move_edge,
)
from .settings import DEFAULT_MAX_WORKERS, DEFAULT_ORACLE_CAP
from .verify import ErrorBudget, environment_norm, network_norm


class ConversionReport(BaseModel):
    """
    Summary of one conversion.

    Args:
        conversion: `tc_to_tt`, `tt_to_tc` or `peps_to_tt`.
        source: Topology of the input.
        target: Topology of the output.
        policy: Truncation policy used for every SVD.
        split: Rank split strategy, for `tt_to_tc`.
        steps: One record per SVD.
        final_ranks: Bond label to rank in the output.
        avg_rank: Mean of the final ranks.
        max_rank: Largest final rank.
        cumulative_error_bound: Sum of the per-step bounds `env_norm * discarded_mass`; None when a truncated
            step has no bound, because tracking was off or its environment was too large to evaluate.
        input_norm: Norm of the input, when it could be computed.
        relative_error_bound: `cumulative_error_bound / input_norm`.
        eliminated_bonds: Bonds of the input that no longer exist.
        node_order: Nodes of the output along the train or chain.
        relative_error: Measured `||in - out|| / ||in||`, filled in by callers that check it.
        total_time: Seconds for the whole conversion.
        parallel: Whether independent steps were prepared concurrently.
    """

    conversion: str
    source: str
    target: str
    policy: str
    split: Optional[str] = None
    steps: List[StepRecord]
    final_ranks: Dict[str, int]
    avg_rank: float
    max_rank: int
    cumulative_error_bound: Optional[float] = None
    input_norm: Optional[float] = None
    relative_error_bound: Optional[float] = None
    eliminated_bonds: List[str] = []
    node_order: List[str]
    relative_error: Optional[float] = None
    total_time: float
    parallel: bool = False

    @property
    def n_svd_steps(self) -> int:
        return len(self.steps)


def _prepare(net: TensorNetwork, step: PlanStep, policy: TruncationPolicy) -> Rewrite:
    if step.kind == "move":
        return prepare_move_edge(net, step.bond, step.across, policy)
    return prepare_merge_parallel_edges(net, step.bond, step.absorb, policy)


def _check_input(net: TensorNetwork):
    violations = validate(net)
    if violations:
        raise ArgumentError("Invalid input network: " + "; ".join(str(v) for v in violations))


class _Executor:
    def __init__(self, policy: TruncationPolicy, parallel: bool, track_error_bound: bool, max_workers: int):
        self.policy = policy
        self.parallel = parallel
        self.track_error_bound = track_error_bound
        self.max_workers = max_workers
        self.budget = ErrorBudget()
        self.bound_available = True
        self.records: List[StepRecord] = []
        self.order: Optional[List[str]] = None

    def _install(self, work: TensorNetwork, rewrite: Rewrite):
        record = rewrite.record
        if record.discarded_mass == 0:
            record = record.model_copy(update={"error_bound": 0.0})
        elif self.track_error_bound and self.bound_available:
            try:
                env = environment_norm(work, record.nodes, cap=DEFAULT_ORACLE_CAP, order=self.order)
            except UnsupportedOperationError as e:
                logger.warning(f"Error bound tracking stopped at step {len(self.records) + 1}: {e}")
                self.bound_available = False
            else:
                bound = self.budget.add(len(self.records), env, record.discarded_mass)
                record = record.model_copy(update={"env_norm": env, "error_bound": bound})
        else:
            self.bound_available = False
        apply_rewrite(work, rewrite, inplace=True)
        self.records.append(record)
        logger.debug(
            f"step {len(self.records)} {record.kind} {record.bonds} on {record.nodes}: "
            f"matrix {record.matrix_shape[0]}x{record.matrix_shape[1]}, rank {record.kept_rank}, "
            f"discarded {record.discarded_mass:.3e}"
        )

    def run(self, net: TensorNetwork, plan: ConversionPlan, progress: bool) -> TensorNetwork:
        work = net.copy()
        self.order = plan.node_order
        pool = ThreadPoolExecutor(max_workers=self.max_workers) if self.parallel else None
        try:
            for batch in tqdm(plan.batches(), desc=plan.conversion, disable=not progress):
                for step in batch:
                    if step.kind == "insert":
                        split = (step.r_d, step.r_tilde)
                        work = insert_artificial_edge(work, step.bond, split, new_label=step.new_label)
                svd_steps = [step for step in batch if step.kind != "insert"]
                if pool is not None and len(svd_steps) > 1:
                    snapshot = work
                    rewrites = list(pool.map(lambda step: _prepare(snapshot, step, self.policy), svd_steps))
                    for rewrite in rewrites:
                        self._install(work, rewrite)
                else:
                    for step in svd_steps:
                        self._install(work, _prepare(work, step, self.policy))
        finally:
            if pool is not None:
                pool.shutdown()
        return work


def _run(
    net: TensorNetwork,
    conversion: str,
    policy: Optional[TruncationPolicy],
    split: Optional[RankSplitStrategy],
    parallel: bool,
    track_error_bound: bool,
    progress: bool,
    max_workers: int,
) -> Tuple[TensorNetwork, ConversionReport]:
    started = time.perf_counter()
    policy = policy or TruncationPolicy()
    _check_input(net)
    source = topology_of(net)
    reduced = drop_rank_one_bonds(net)
    plan = make_plan(reduced, conversion, split)
    logger.info(
        f"{conversion}: {source} with {len(net.nodes)} nodes, policy {policy}, {plan.n_svd_steps} SVD steps"
        + (", parallel" if parallel else "")
    )

    executor = _Executor(policy, parallel, track_error_bound, max_workers)
    result = executor.run(reduced, plan, progress)

    target_order = cycle_order(result) if conversion == "tt_to_tc" else path_order(result)
    if target_order is None:
        raise TensorNetworkError(f"{conversion} did not produce the expected topology.")

    input_norm = None
    if track_error_bound:
        try:
            input_norm = network_norm(net)
        except UnsupportedOperationError:
            logger.warning("Input norm is not computable; reporting the absolute error bound only.")
    cumulative = executor.budget.cumulative if executor.bound_available else None
    ranks = result.ranks()
    report = ConversionReport(
        conversion=conversion,
        source=str(source),
        target=str(Topology(kind="chain" if conversion == "tt_to_tc" else "train", d=len(result.nodes))),
        policy=str(policy),
        split=str(split or RankSplitStrategy()) if conversion == "tt_to_tc" else None,
        steps=executor.records,
        final_ranks=ranks,
        avg_rank=sum(ranks.values()) / len(ranks),
        max_rank=max(ranks.values()),
        cumulative_error_bound=cumulative,
        input_norm=input_norm,
        relative_error_bound=cumulative / input_norm if cumulative is not None and input_norm else None,
        eliminated_bonds=sorted(set(net.bonds) - set(result.bonds)),
        node_order=plan.node_order,
        total_time=time.perf_counter() - started,
        parallel=parallel,
    )
    logger.info(
        f"{conversion} done in {report.total_time:.3f}s: avg rank {report.avg_rank:.2f}, max rank {report.max_rank}, "
        + (f"error bound {cumulative:.3e}" if cumulative is not None else "no error bound")
    )
    return result, report


def tc_to_tt(
    net: TensorNetwork,
    policy: Optional[TruncationPolicy] = None,
    parallel: bool = False,
    track_error_bound: bool = True,
    progress: bool = False,
    max_workers: int = DEFAULT_MAX_WORKERS,
) -> Tuple[TensorNetwork, ConversionReport]:
    """
    Convert a tensor chain into a tensor train.

    The closing bond is moved alternately from both ends toward the middle and merged into the
    center bond, which takes `d - 2` moves and one merge.

    Args:
        net: A network whose bond graph is a single cycle.
        policy: Truncation policy, exact by default.
        parallel: Prepare the two end moves of each round concurrently.
        track_error_bound: Compute the environment norm of every truncated step.
        progress: Show a progress bar.
        max_workers: Thread pool size for parallel stepping.

    Returns:
        The train and the conversion report.
    """
    return _run(net, "tc_to_tt", policy, None, parallel, track_error_bound, progress, max_workers)


def tt_to_tc(
    net: TensorNetwork,
    split: Optional[RankSplitStrategy] = None,
    policy: Optional[TruncationPolicy] = None,
    parallel: bool = False,
    track_error_bound: bool = True,
    progress: bool = False,
    max_workers: int = DEFAULT_MAX_WORKERS,
) -> Tuple[TensorNetwork, ConversionReport]:
    """
    Convert a tensor train into a tensor chain.

    The center bond is factored into two parallel bonds according to `split`; the new one is moved
    outward until it connects the two ends.
    """
    return _run(net, "tt_to_tc", policy, split, parallel, track_error_bound, progress, max_workers)


def peps_to_tt(
    net: TensorNetwork,
    policy: Optional[TruncationPolicy] = None,
    parallel: bool = False,
    track_error_bound: bool = True,
    progress: bool = False,
    max_workers: int = DEFAULT_MAX_WORKERS,
) -> Tuple[TensorNetwork, ConversionReport]:
    """Convert a rows x cols grid into a train following the snake order of the rows."""
    return _run(net, "peps_to_tt", policy, None, parallel, track_error_bound, progress, max_workers)


def convert(
    net: TensorNetwork,
    target: Union[str, Topology],
    policy: Optional[TruncationPolicy] = None,
    split: Optional[RankSplitStrategy] = None,
    **kwargs,
) -> Tuple[TensorNetwork, ConversionReport]:
    """Pick the conversion from the shape of `net` and the target (`tt` or `tc`) and run it."""
    kind = target_kind(target)
    if isinstance(target, Topology) and target.d != len(net.nodes):
        raise ArgumentError(f"Target {target} does not have {len(net.nodes)} nodes.")
    conversion = source_conversion(net, kind)
    if conversion == "tc_to_tt":
        return tc_to_tt(net, policy, **kwargs)
    if conversion == "peps_to_tt":
        return peps_to_tt(net, policy, **kwargs)
    return tt_to_tc(net, split, policy, **kwargs)


def tc_to_tt_to_tc(
    net: TensorNetwork,
    policy: Optional[TruncationPolicy] = None,
    split: Optional[RankSplitStrategy] = None,
    **kwargs,
) -> Tuple[TensorNetwork, ConversionReport, ConversionReport]:
    """Round trip a chain through a train and back. Returns the final chain and both stage reports."""
    train, first = tc_to_tt(net, policy, **kwargs)
    chain, second = tt_to_tc(train, split, policy, **kwargs)
    return chain, first, second
