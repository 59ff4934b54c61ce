"""Deterministic step plans for the three conversions, and their symbolic (data free) evaluation."""

import math
from itertools import zip_longest
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ArgumentError
from .network import (
    Bond,
    TensorNetwork,
    Topology,
    cycle_order,
    drop_rank_one_bonds,
    grid_layout,
    natural_key,
    path_order,
    topology_of,
)

Conversion = Literal["tc_to_tt", "tt_to_tc", "peps_to_tt"]


class RankSplitStrategy(BaseModel):
    """
    How the center bond of a train is factored into `(r_d, r_tilde)` when closing it into a chain.

    Args:
        kind: `balanced` uses `r_d = ceil(sqrt(r))`; `fixed` uses the given `r_d` and `r_tilde`;
            `rd` fixes `r_d` and derives `r_tilde`.
        r_d: Rank of the closing bond, for `fixed` and `rd`.
        r_tilde: Rank left on the center bond, for `fixed`.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["balanced", "fixed", "rd"] = "balanced"
    r_d: Optional[int] = Field(default=None, ge=1)
    r_tilde: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_fields(self):
        if self.kind == "balanced" and (self.r_d is not None or self.r_tilde is not None):
            raise ValueError("balanced split takes no explicit ranks")
        if self.kind == "fixed" and (self.r_d is None or self.r_tilde is None):
            raise ValueError("fixed split needs both r_d and r_tilde")
        if self.kind == "rd" and (self.r_d is None or self.r_tilde is not None):
            raise ValueError("rd split needs r_d only")
        return self

    @classmethod
    def parse(cls, text: str) -> "RankSplitStrategy":
        """Parse `balanced`, `fixed:<r_d>x<r_tilde>` or `rd:<r_d>`."""
        text = text.strip().lower()
        try:
            if text == "balanced":
                return cls()
            if text.startswith("fixed:"):
                r_d, r_tilde = text[len("fixed:") :].split("x")
                return cls(kind="fixed", r_d=int(r_d), r_tilde=int(r_tilde))
            if text.startswith("rd:"):
                return cls(kind="rd", r_d=int(text[len("rd:") :]))
        except ValueError as e:
            raise ArgumentError(f"Invalid rank split {text!r}: {e}") from None
        raise ArgumentError(f"Invalid rank split {text!r}; expected balanced, fixed:<r_d>x<r_tilde> or rd:<r_d>.")

    def resolve(self, rank: int) -> Tuple[int, int]:
        """`(r_d, r_tilde)` for a center bond of the given rank."""
        if self.kind == "balanced":
            r_d = math.isqrt(rank - 1) + 1
            return r_d, -(-rank // r_d)
        if self.kind == "rd":
            return self.r_d, -(-rank // self.r_d)
        if self.r_d * self.r_tilde < rank:
            raise ArgumentError(f"Split {self.r_d}x{self.r_tilde} cannot hold a center bond of rank {rank}.")
        return self.r_d, self.r_tilde

    def __str__(self):
        if self.kind == "fixed":
            return f"fixed:{self.r_d}x{self.r_tilde}"
        if self.kind == "rd":
            return f"rd:{self.r_d}"
        return "balanced"


class PlanStep(BaseModel):
    """
    One step of a conversion plan.

    `move` moves `bond` across `across`; `merge` fuses `absorb` into `bond`; `insert` factors `bond`
    into itself (rank `r_tilde`) and `new_label` (rank `r_d`). Steps sharing a `batch` touch disjoint nodes.
    """

    kind: Literal["move", "merge", "insert"]
    bond: str
    across: Optional[str] = None
    absorb: Optional[str] = None
    new_label: Optional[str] = None
    r_d: Optional[int] = None
    r_tilde: Optional[int] = None
    batch: int = 0
    nodes: List[str] = []


class ConversionPlan(BaseModel):
    conversion: Conversion
    steps: List[PlanStep]
    node_order: List[str]
    eliminated_bonds: List[str] = []

    @property
    def n_svd_steps(self) -> int:
        return sum(step.kind != "insert" for step in self.steps)

    def batches(self) -> List[List[PlanStep]]:
        grouped: Dict[int, List[PlanStep]] = {}
        for step in self.steps:
            grouped.setdefault(step.batch, []).append(step)
        return [grouped[key] for key in sorted(grouped)]


class SymbolicStep(BaseModel):
    kind: str
    bond: str
    rows: int
    cols: int
    bound: int


class SymbolicNetwork:
    """
    Mode extents per node and bond endpoints, without tensor data.

    Replays plan steps with every new rank set to its upper bound
    `min(rows, cols, product of contracted ranks)`.
    """

    def __init__(self, net: TensorNetwork):
        self.ends: Dict[str, Tuple[str, str]] = {bond.label: bond.ends for bond in net.bond_list}
        self.extent: Dict[str, int] = {bond.label: bond.rank for bond in net.bond_list}
        self.own: Dict[str, List[str]] = {node: [mode.label for mode in net.physical[node]] for node in net.node_ids}
        self.extent.update(net.physical_dims())

    def labels(self, node: str) -> List[str]:
        return [label for label, ends in self.ends.items() if node in ends] + self.own[node]

    def between(self, u: str, w: str) -> List[str]:
        return [label for label, ends in self.ends.items() if set(ends) == {u, w}]

    def _product(self, labels) -> int:
        return math.prod(self.extent[label] for label in labels)

    def move(self, bond: str, across: str) -> SymbolicStep:
        common = set(self.ends[bond]) & set(self.ends[across])
        if len(common) != 1:
            raise ArgumentError(f"Bonds {bond!r} and {across!r} must share exactly one endpoint.")
        u = common.pop()
        w = self.ends[across][0] if self.ends[across][1] == u else self.ends[across][1]
        shared = self.between(u, w)
        rows = self._product(label for label in self.labels(u) if label != bond and label not in shared)
        cols = self._product(label for label in self.labels(w) if label not in shared) * self.extent[bond]
        bound = min(rows, cols, self.extent[bond] * self._product(shared))
        for label in shared:
            if label != across:
                del self.ends[label]
        self.extent[across] = bound
        a, b = self.ends[bond]
        self.ends[bond] = (w, b) if a == u else (a, w)
        return SymbolicStep(kind="move", bond=across, rows=rows, cols=cols, bound=bound)

    def merge(self, keep: str, absorb: str) -> SymbolicStep:
        u, w = self.ends[keep]
        if set(self.ends[absorb]) != {u, w}:
            raise ArgumentError(f"Bonds {keep!r} and {absorb!r} are not parallel.")
        shared = self.between(u, w)
        rows = self._product(label for label in self.labels(u) if label not in shared)
        cols = self._product(label for label in self.labels(w) if label not in shared)
        bound = min(rows, cols, self._product(shared))
        for label in shared:
            if label != keep:
                del self.ends[label]
        self.extent[keep] = bound
        return SymbolicStep(kind="merge", bond=keep, rows=rows, cols=cols, bound=bound)

    def insert(self, bond: str, new_label: str, r_d: int, r_tilde: int):
        self.ends[new_label] = self.ends[bond]
        self.extent[bond] = r_tilde
        self.extent[new_label] = r_d

    def apply(self, step: PlanStep) -> Optional[SymbolicStep]:
        if step.kind == "move":
            return self.move(step.bond, step.across)
        if step.kind == "merge":
            return self.merge(step.bond, step.absorb)
        self.insert(step.bond, step.new_label, step.r_d, step.r_tilde)
        return None

    def bond_ranks(self) -> Dict[str, int]:
        return {label: self.extent[label] for label in sorted(self.ends, key=natural_key)}


def _bond_between(net: TensorNetwork, u: str, w: str) -> Bond:
    bonds = net.bonds_between(u, w)
    if len(bonds) != 1:
        raise ArgumentError(f"Expected a single bond between {u!r} and {w!r}, found {len(bonds)}.")
    return bonds[0]


def _require_shape(net: TensorNetwork, kind: str, conversion: str) -> TensorNetwork:
    shape = topology_of(net)
    reduced = drop_rank_one_bonds(net)
    # a 2x2 grid classifies as a 4-cycle
    if shape.kind != kind and not (kind == "grid" and grid_layout(reduced) is not None):
        raise ArgumentError(f"{conversion} needs a {kind} network, got {shape}.")
    return reduced


def plan_tc_to_tt(net: TensorNetwork) -> ConversionPlan:
    """
    Move the closing bond alternately from the first and the last node toward the middle, then merge it.

    The closing bond is the one between the last and the first node of the cycle order. The result is
    a train in cycle order with `d - 2` moves and one merge. Rank-1 bonds left out by `topology_of`
    are dropped first.
    """
    net = _require_shape(net, "chain", "tc_to_tt")
    order = cycle_order(net)
    d = len(order)
    path = [_bond_between(net, order[k], order[k + 1]).label for k in range(d - 1)]
    closing = _bond_between(net, order[-1], order[0]).label

    steps: List[PlanStep] = []
    left, right, batch = 0, d - 1, 0
    while left + 1 < right:
        nodes = [order[left], order[left + 1]]
        steps.append(PlanStep(kind="move", bond=closing, across=path[left], batch=batch, nodes=nodes))
        left += 1
        if left + 1 < right:
            nodes = [order[right], order[right - 1]]
            steps.append(PlanStep(kind="move", bond=closing, across=path[right - 1], batch=batch, nodes=nodes))
            right -= 1
        batch += 1
    nodes = [order[left], order[right]]
    steps.append(PlanStep(kind="merge", bond=path[left], absorb=closing, batch=batch, nodes=nodes))
    return ConversionPlan(conversion="tc_to_tt", steps=steps, node_order=order, eliminated_bonds=[closing])


def plan_tt_to_tc(net: TensorNetwork, split: Optional[RankSplitStrategy] = None) -> ConversionPlan:
    """
    Factor the center bond into two parallel bonds and move the new one outward, right first,
    until it connects the two ends. A rank-1 bond between the ends of a train is dropped first.
    """
    net = _require_shape(net, "train", "tt_to_tc")
    order = path_order(net)
    if len(order) < 3:
        raise ArgumentError("tt_to_tc needs a train of at least 3 nodes.")
    split = split or RankSplitStrategy()
    d = len(order)
    path = [_bond_between(net, order[k], order[k + 1]) for k in range(d - 1)]
    center = path[math.ceil(d / 2) - 1]
    r_d, r_tilde = split.resolve(center.rank)
    closing = net.fresh_bond_label()

    steps = [
        PlanStep(
            kind="insert",
            bond=center.label,
            new_label=closing,
            r_d=r_d,
            r_tilde=r_tilde,
            batch=0,
            nodes=list(center.ends),
        )
    ]
    left, right = math.ceil(d / 2) - 1, math.ceil(d / 2)
    rights = [
        PlanStep(kind="move", bond=closing, across=path[k].label, nodes=[order[k], order[k + 1]])
        for k in range(right, d - 1)
    ]
    lefts = [
        PlanStep(kind="move", bond=closing, across=path[k - 1].label, nodes=[order[k], order[k - 1]])
        for k in range(left, 0, -1)
    ]
    for batch, pair in enumerate(zip_longest(rights, lefts), start=1):
        steps.extend(step.model_copy(update={"batch": batch}) for step in pair if step is not None)
    return ConversionPlan(conversion="tt_to_tc", steps=steps, node_order=order)


def snake_order(layout: Dict[str, Tuple[int, int]]) -> List[str]:
    rows = max(r for r, _ in layout.values()) + 1
    cols = max(c for _, c in layout.values()) + 1
    at = {position: node for node, position in layout.items()}
    order = []
    for r in range(rows):
        columns = range(cols) if r % 2 == 0 else range(cols - 1, -1, -1)
        order.extend(at[(r, c)] for c in columns)
    return order


def plan_peps_to_tt(net: TensorNetwork) -> ConversionPlan:
    """
    Remove all vertical bonds except those of the snake path, one row pair at a time.

    A vertical bond is moved along the two horizontal bonds next to it and merged into the next
    vertical bond of the same row pair. Even row pairs sweep left to right into their last column,
    odd row pairs right to left into their first column. Even pairs are disjoint and share batches;
    odd pairs follow.
    """
    net = _require_shape(net, "grid", "peps_to_tt")
    layout = grid_layout(net)
    at = {position: node for node, position in layout.items()}
    rows = max(r for r, _ in layout.values()) + 1
    cols = max(c for _, c in layout.values()) + 1

    def horizontal(r, c):
        return _bond_between(net, at[(r, c)], at[(r, c + 1)]).label

    def vertical(r, c):
        return _bond_between(net, at[(r, c)], at[(r + 1, c)]).label

    steps: List[PlanStep] = []
    eliminated: List[str] = []
    first_batch = 0
    for parity in (0, 1):
        longest = 0
        for i in range(parity, rows - 1, 2):
            if parity == 0:
                sweep = [(c, c + 1) for c in range(cols - 1)]
            else:
                sweep = [(c, c - 1) for c in range(cols - 1, 0, -1)]
            index = 0
            for c, target in sweep:
                h = min(c, target)
                moving, keep = vertical(i, c), vertical(i, target)
                eliminated.append(moving)
                batch = first_batch + index
                steps.extend(
                    [
                        PlanStep(
                            kind="move",
                            bond=moving,
                            across=horizontal(i, h),
                            batch=batch,
                            nodes=[at[(i, c)], at[(i, target)]],
                        ),
                        PlanStep(
                            kind="move",
                            bond=moving,
                            across=horizontal(i + 1, h),
                            batch=batch + 1,
                            nodes=[at[(i + 1, c)], at[(i + 1, target)]],
                        ),
                        PlanStep(
                            kind="merge",
                            bond=keep,
                            absorb=moving,
                            batch=batch + 2,
                            nodes=[at[(i, target)], at[(i + 1, target)]],
                        ),
                    ]
                )
                index += 3
            longest = max(longest, index)
        first_batch += longest
    return ConversionPlan(
        conversion="peps_to_tt", steps=steps, node_order=snake_order(layout), eliminated_bonds=eliminated
    )


def source_conversion(net: TensorNetwork, target: str) -> Conversion:
    """Pick the conversion that takes `net` to a `train` or `chain` target, judged by `topology_of`."""
    if target not in ("train", "chain"):
        raise ArgumentError(f"Unsupported conversion target {target!r}.")
    shape = topology_of(net)
    if target == "train":
        if shape.kind == "chain":
            return "tc_to_tt"
        if shape.kind == "grid":
            return "peps_to_tt"
    elif shape.kind == "train" and len(net.nodes) >= 3:
        return "tt_to_tc"
    raise ArgumentError(f"No conversion from {shape} to a {target}.")


def make_plan(net: TensorNetwork, conversion: Conversion, split: Optional[RankSplitStrategy] = None) -> ConversionPlan:
    if conversion == "tc_to_tt":
        return plan_tc_to_tt(net)
    if conversion == "tt_to_tc":
        return plan_tt_to_tc(net, split)
    if conversion == "peps_to_tt":
        return plan_peps_to_tt(net)
    raise ArgumentError(f"Unknown conversion {conversion!r}.")


def target_kind(target) -> str:
    """Normalize `tt`/`tc` strings or a Topology to `train` or `chain`."""
    if isinstance(target, Topology):
        if target.kind not in ("train", "chain"):
            raise ArgumentError(f"No conversion produces a {target.kind} network.")
        return target.kind
    kinds = {"tt": "train", "train": "train", "tc": "chain", "chain": "chain"}
    try:
        return kinds[str(target).lower()]
    except KeyError:
        raise ArgumentError(f"Unsupported conversion target {target!r}; expected tt or tc.") from None
