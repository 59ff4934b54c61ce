from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel

from .errors import ArgumentError
from .network import Topology, TensorNetwork, drop_rank_one_bonds, validate
from .plan import RankSplitStrategy, SymbolicNetwork, SymbolicStep, make_plan, source_conversion, target_kind


class RankBoundPlan(BaseModel):
    """
    Predicted upper bounds for a conversion, computed without touching tensor data.

    Args:
        conversion: The conversion the bounds are for.
        bounds: Upper bound for the rank of every bond of the output.
        steps: Matrix shape and rank bound of every SVD.
        max_matrix: Largest matrix any step decomposes.
        cost: Estimated flops, the sum of `rows * cols * min(rows, cols)` over all SVDs.
    """

    conversion: str
    bounds: Dict[str, int]
    steps: List[SymbolicStep]
    max_matrix: Tuple[int, int]
    cost: int

    @property
    def max_bound(self) -> int:
        return max(self.bounds.values())


def predict_rank_bounds(
    net: TensorNetwork, target: Union[str, Topology], split: Optional[RankSplitStrategy] = None
) -> RankBoundPlan:
    """
    Replay the conversion plan symbolically, bounding each new rank by
    `min(row dimension, column dimension, product of the contracted ranks)`.

    Args:
        net: A valid chain, train or grid network.
        target: `tt`/`tc` or a train/chain Topology.
        split: Rank split for train to chain conversions.
    """
    violations = validate(net)
    if violations:
        raise ArgumentError(f"Invalid network: {violations[0]}")
    conversion = source_conversion(net, target_kind(target))
    net = drop_rank_one_bonds(net)
    plan = make_plan(net, conversion, split)
    symbolic = SymbolicNetwork(net)
    steps = [result for result in (symbolic.apply(step) for step in plan.steps) if result is not None]
    biggest = max(steps, key=lambda step: step.rows * step.cols)
    return RankBoundPlan(
        conversion=conversion,
        bounds=symbolic.bond_ranks(),
        steps=steps,
        max_matrix=(biggest.rows, biggest.cols),
        cost=sum(step.rows * step.cols * min(step.rows, step.cols) for step in steps),
    )


def conversion_cost_model(
    net: TensorNetwork, target: Union[str, Topology], split: Optional[RankSplitStrategy] = None
) -> int:
    """Flop estimate of a conversion: one `m * n * min(m, n)` term per SVD of the plan."""
    return predict_rank_bounds(net, target, split).cost
