"""
Graph rewriting primitives: contract a bond, split a node, move an edge, merge parallel edges
and insert an artificial edge.

Every SVD based primitive is split into a pure `prepare_*` step that only reads the network and
returns a `Rewrite`, and `apply_rewrite`, which installs it. Rewrites touching disjoint node pairs
can be prepared concurrently from the same network.
"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ArgumentError
from .linalg import TruncationPolicy, svd_split
from .network import Bond, PhysicalMode, TensorNetwork
from .tensor import DenseTensor, contract, matricize, tensorize


class StepRecord(BaseModel):
    """
    One SVD step of a conversion.

    Args:
        kind: `move`, `merge` or `split`.
        nodes: The two nodes whose tensors were replaced.
        bonds: Bonds involved in the step.
        matrix_shape: Shape of the decomposed matrix.
        kept_rank: Rank of the new bond.
        discarded_mass: Frobenius norm of the cut singular values; 0 under the exact policy.
        env_norm: Norm of the environment of the two nodes, when error tracking is on.
        error_bound: `env_norm * discarded_mass`, when error tracking is on.
        wall_time: Seconds spent preparing the step.
    """

    kind: Literal["move", "merge", "split"]
    nodes: List[str]
    bonds: List[str]
    matrix_shape: Tuple[int, int]
    kept_rank: int = Field(ge=1)
    discarded_mass: float = Field(ge=0)
    env_norm: Optional[float] = None
    error_bound: Optional[float] = None
    wall_time: float = 0.0


class IndexPairing(BaseModel):
    """
    Bijection between pairs `(a, b)` with `a < r_tilde`, `b < r_d` and the flat range `[0, r_d * r_tilde)`.

    The default table is `a + r_tilde * b`. A custom table lists the flat index for every `a + r_tilde * b`.
    """

    model_config = ConfigDict(frozen=True)

    r_tilde: int = Field(ge=1)
    r_d: int = Field(ge=1)
    table: Optional[Tuple[int, ...]] = None

    @model_validator(mode="after")
    def _check_table(self):
        if self.table is not None and sorted(self.table) != list(range(self.r_d * self.r_tilde)):
            raise ValueError(f"Pairing table must be a permutation of 0..{self.r_d * self.r_tilde - 1}.")
        return self

    def index(self, a: int, b: int) -> int:
        position = a + self.r_tilde * b
        return position if self.table is None else self.table[position]

    def lookup(self) -> np.ndarray:
        size = self.r_d * self.r_tilde
        return np.arange(size) if self.table is None else np.asarray(self.table)


@dataclass
class Rewrite:
    """A prepared, not yet applied change to two nodes and their bonds."""

    removed_nodes: List[str]
    tensors: Dict[str, DenseTensor]
    physical: Dict[str, List[PhysicalMode]]
    dropped_bonds: List[str] = field(default_factory=list)
    new_bonds: List[Bond] = field(default_factory=list)
    reranked: Dict[str, int] = field(default_factory=dict)
    # label -> (old endpoint, new endpoint)
    reattached: Dict[str, Tuple[str, str]] = field(default_factory=dict)
    record: Optional[StepRecord] = None
    # true truncated tail, also under the exact policy
    discarded_mass: float = 0.0

    @property
    def touched_nodes(self) -> set:
        return set(self.removed_nodes) | set(self.tensors)


def apply_rewrite(net: TensorNetwork, rewrite: Rewrite, inplace: bool = False) -> TensorNetwork:
    target = net if inplace else net.copy()
    for node in rewrite.removed_nodes:
        target.nodes.pop(node, None)
        target.physical.pop(node, None)
    for label in rewrite.dropped_bonds:
        target.bonds.pop(label, None)
    for label, rank in rewrite.reranked.items():
        target.bonds[label] = target.bonds[label].with_rank(rank)
    for label, (old, new) in rewrite.reattached.items():
        bond = target.bonds[label]
        if bond.a == old:
            target.bonds[label] = bond.model_copy(update={"a": new})
        elif bond.b == old:
            target.bonds[label] = bond.model_copy(update={"b": new})
        else:
            raise ArgumentError(f"Bond {label!r} no longer ends at {old!r}.")
    for bond in rewrite.new_bonds:
        target.add_bond(bond)
    for node, modes in rewrite.physical.items():
        target.physical[node] = list(modes)
    for node, tensor in rewrite.tensors.items():
        target.nodes[node] = tensor.transpose(target.canonical_labels(node))
    return target


def _decompose(
    theta: DenseTensor,
    left_labels: Sequence[str],
    right_labels: Sequence[str],
    policy: TruncationPolicy,
    bond_label: str,
):
    matrix = matricize(theta, left_labels, right_labels)
    split = svd_split(matrix, policy)
    k = split.kept_rank
    left = tensorize(split.left, left_labels, [theta.extent(label) for label in left_labels], [bond_label], [k])
    right = tensorize(split.right, [bond_label], [k], right_labels, [theta.extent(label) for label in right_labels])
    return left, right, split, matrix.shape


def _record(kind, nodes, bonds, shape, split, policy, started) -> StepRecord:
    return StepRecord(
        kind=kind,
        nodes=list(nodes),
        bonds=list(bonds),
        matrix_shape=tuple(shape),
        kept_rank=split.kept_rank,
        discarded_mass=0.0 if policy.is_exact else split.discarded_mass,
        wall_time=time.perf_counter() - started,
    )


def _pair_rewrite(
    net: TensorNetwork,
    u: str,
    w: str,
    u_labels: Sequence[str],
    w_labels: Sequence[str],
    policy: TruncationPolicy,
    kind: str,
    kept_label: str,
    involved: Sequence[str],
    started: float,
) -> Rewrite:
    """Contract every bond between u and w, then split back into u (orthonormal) and w."""
    shared = [bond.label for bond in net.bonds_between(u, w)]
    theta = contract(net.nodes[u], net.nodes[w], shared)
    left, right, split, shape = _decompose(theta, u_labels, w_labels, policy, kept_label)
    rewrite = Rewrite(
        removed_nodes=[],
        tensors={u: left, w: right},
        physical={u: net.physical[u], w: net.physical[w]},
        dropped_bonds=[label for label in shared if label != kept_label],
        reranked={kept_label: split.kept_rank},
        record=_record(kind, [u, w], involved, shape, split, policy, started),
        discarded_mass=split.discarded_mass,
    )
    return rewrite


def prepare_move_edge(net: TensorNetwork, bond_to_move: str, across: str, policy: TruncationPolicy) -> Rewrite:
    """
    Prepare moving `bond_to_move` from the node it shares with `across` to the other end of `across`.

    `across` keeps its label and takes the new SVD rank. Other bonds parallel to `across` are absorbed.
    """
    started = time.perf_counter()
    moving, bridge = net.bond(bond_to_move), net.bond(across)
    if moving.label == bridge.label:
        raise ArgumentError(f"Cannot move bond {moving.label!r} across itself.")
    common = set(moving.ends) & set(bridge.ends)
    if len(common) != 1:
        raise ArgumentError(f"Bonds {moving.label!r} and {bridge.label!r} must share exactly one endpoint.")
    u = common.pop()
    w = bridge.other(u)
    shared = {bond.label for bond in net.bonds_between(u, w)}
    u_labels = [label for label in net.nodes[u].labels if label != moving.label and label not in shared]
    w_labels = [label for label in net.nodes[w].labels if label not in shared] + [moving.label]
    involved = [moving.label, bridge.label]
    rewrite = _pair_rewrite(net, u, w, u_labels, w_labels, policy, "move", bridge.label, involved, started)
    rewrite.reattached[moving.label] = (u, w)
    return rewrite


def prepare_merge_parallel_edges(net: TensorNetwork, e1: str, e2: str, policy: TruncationPolicy) -> Rewrite:
    """Prepare fusing all bonds between the endpoints of `e1` and `e2` into one bond labelled `e1`."""
    started = time.perf_counter()
    first, second = net.bond(e1), net.bond(e2)
    if first.label == second.label or {first.a, first.b} != {second.a, second.b}:
        raise ArgumentError(f"Bonds {e1!r} and {e2!r} do not connect the same pair of nodes.")
    u, w = first.a, first.b
    shared = [bond.label for bond in net.bonds_between(u, w)]
    u_labels = [label for label in net.nodes[u].labels if label not in shared]
    w_labels = [label for label in net.nodes[w].labels if label not in shared]
    return _pair_rewrite(net, u, w, u_labels, w_labels, policy, "merge", first.label, shared, started)


def move_edge(
    net: TensorNetwork, bond_to_move: str, across: str, policy: TruncationPolicy
) -> Tuple[TensorNetwork, StepRecord]:
    """
    Re-attach `bond_to_move` to the far end of `across` with a single SVD.

    Args:
        net: The network. It is not modified.
        bond_to_move: Label of the bond to move.
        across: Label of a bond sharing exactly one node with `bond_to_move`.
        policy: Truncation policy of the SVD.

    Returns:
        The rewired network and the step record.
    """
    rewrite = prepare_move_edge(net, bond_to_move, across, policy)
    logger.debug(f"move {bond_to_move} across {across}: rank {rewrite.record.kept_rank}")
    return apply_rewrite(net, rewrite), rewrite.record


def merge_parallel_edges(
    net: TensorNetwork, e1: str, e2: str, policy: TruncationPolicy
) -> Tuple[TensorNetwork, StepRecord]:
    """Fuse two parallel bonds into a single bond of their joint numerical rank. The fused bond keeps `e1`'s label."""
    rewrite = prepare_merge_parallel_edges(net, e1, e2, policy)
    logger.debug(f"merge {e2} into {e1}: rank {rewrite.record.kept_rank}")
    return apply_rewrite(net, rewrite), rewrite.record


def contract_bond(net: TensorNetwork, bond: str) -> TensorNetwork:
    """
    Replace the two endpoints of `bond` with a single node holding their contraction.

    All bonds between the two nodes are summed at once. The merged node is named `u+w` and
    carries both physical modes.
    """
    target = net.bond(bond)
    u, w = target.a, target.b
    shared = [b.label for b in net.bonds_between(u, w)]
    merged = f"{u}+{w}"
    if merged in net.nodes:
        raise ArgumentError(f"Node id {merged!r} is already taken.")
    result = net.copy()
    theta = contract(net.nodes[u], net.nodes[w], shared)
    for label in shared:
        del result.bonds[label]
    for other in result.bond_list:
        if other.touches(u) or other.touches(w):
            result.bonds[other.label] = other.model_copy(
                update={"a": merged if other.a in (u, w) else other.a, "b": merged if other.b in (u, w) else other.b}
            )
    for node in (u, w):
        del result.nodes[node]
    result.physical[merged] = result.physical.pop(u) + result.physical.pop(w)
    result.nodes[merged] = theta.transpose(result.canonical_labels(merged))
    return result


def split_node(
    net: TensorNetwork,
    node: str,
    left_labels: Sequence[str],
    policy: TruncationPolicy,
    left_id: Optional[str] = None,
    right_id: Optional[str] = None,
    bond_label: Optional[str] = None,
) -> Tuple[TensorNetwork, StepRecord]:
    """
    Split a node in two with one SVD.

    Args:
        net: The network.
        node: Node to split.
        left_labels: Proper nonempty subset of the node's mode labels kept by the orthonormal left factor.
        policy: Truncation policy.
        left_id: Id of the left node, `<node>.a` by default.
        right_id: Id of the right node, `<node>.b` by default.
        bond_label: Label of the new bond, a fresh `j` label by default.

    Returns:
        The new network and the step record.
    """
    started = time.perf_counter()
    if node not in net.nodes:
        raise ArgumentError(f"Unknown node {node!r}.")
    tensor = net.nodes[node]
    left_labels = list(left_labels)
    if not left_labels or len(set(left_labels)) != len(left_labels) or len(left_labels) >= tensor.ndim:
        raise ArgumentError(f"Left labels {left_labels} must be a proper nonempty subset of {list(tensor.labels)}.")
    unknown = set(left_labels) - set(tensor.labels)
    if unknown:
        raise ArgumentError(f"Labels {sorted(unknown)} are not modes of node {node!r}.")
    right_labels = [label for label in tensor.labels if label not in left_labels]

    left_id = left_id or f"{node}.a"
    right_id = right_id or f"{node}.b"
    bond_label = bond_label or net.fresh_bond_label()
    if left_id == right_id:
        raise ArgumentError("Left and right node ids must differ.")
    for new_id in (left_id, right_id):
        if new_id != node and new_id in net.nodes:
            raise ArgumentError(f"Node id {new_id!r} is already taken.")
    if bond_label in net.bonds:
        raise ArgumentError(f"Bond label {bond_label!r} is already taken.")

    left, right, split, shape = _decompose(tensor, left_labels, right_labels, policy, bond_label)
    modes = net.physical.get(node, [])
    rewrite = Rewrite(
        removed_nodes=[node],
        tensors={left_id: left, right_id: right},
        physical={
            left_id: [mode for mode in modes if mode.label in left_labels],
            right_id: [mode for mode in modes if mode.label not in left_labels],
        },
        new_bonds=[Bond(label=bond_label, a=left_id, b=right_id, rank=split.kept_rank)],
        record=_record("split", [left_id, right_id], [bond_label], shape, split, policy, started),
        discarded_mass=split.discarded_mass,
    )
    for bond in net.incident_bonds(node):
        rewrite.reattached[bond.label] = (node, left_id if bond.label in left_labels else right_id)
    return apply_rewrite(net, rewrite), rewrite.record


def _pad_and_pair(tensor: DenseTensor, label: str, new_label: str, pairing: IndexPairing) -> DenseTensor:
    size = pairing.r_d * pairing.r_tilde
    others = [other for other in tensor.labels if other != label]
    data = tensor.transpose(others + [label]).data
    padded = np.zeros(data.shape[:-1] + (size,))
    padded[..., : data.shape[-1]] = data
    paired = padded[..., pairing.lookup()].reshape(data.shape[:-1] + (pairing.r_d, pairing.r_tilde))
    return DenseTensor(paired, others + [new_label, label])


def insert_artificial_edge(
    net: TensorNetwork,
    bond: str,
    r_split: Tuple[int, int],
    pairing: Optional[IndexPairing] = None,
    new_label: Optional[str] = None,
) -> TensorNetwork:
    """
    Factor a bond into two parallel bonds of ranks `r_tilde` (keeps the label) and `r_d` (new label).

    Both endpoint tensors are zero padded to `r_d * r_tilde` slices and reshaped through `pairing`,
    so the represented tensor is unchanged.

    Args:
        net: The network.
        bond: Label of the bond to factor.
        r_split: `(r_d, r_tilde)` with `r_d * r_tilde >= rank(bond)`.
        pairing: Index bijection, `a + r_tilde * b` by default.
        new_label: Label of the `r_d` bond, a fresh `j` label by default.
    """
    target = net.bond(bond)
    r_d, r_tilde = (int(value) for value in r_split)
    if r_d < 1 or r_tilde < 1:
        raise ArgumentError(f"Rank split ({r_d}, {r_tilde}) must be positive.")
    if r_d * r_tilde < target.rank:
        raise ArgumentError(f"Rank split {r_d}x{r_tilde} cannot hold bond {bond!r} of rank {target.rank}.")
    pairing = pairing or IndexPairing(r_tilde=r_tilde, r_d=r_d)
    if (pairing.r_d, pairing.r_tilde) != (r_d, r_tilde):
        raise ArgumentError(f"Pairing is for {pairing.r_d}x{pairing.r_tilde}, not {r_d}x{r_tilde}.")
    new_label = new_label or net.fresh_bond_label()
    if new_label in net.bonds:
        raise ArgumentError(f"Bond label {new_label!r} is already taken.")

    result = net.copy()
    result.bonds[bond] = target.with_rank(r_tilde)
    result.add_bond(Bond(label=new_label, a=target.a, b=target.b, rank=r_d))
    for node in target.ends:
        paired = _pad_and_pair(net.nodes[node], bond, new_label, pairing)
        result.nodes[node] = paired.transpose(result.canonical_labels(node))
    logger.debug(f"inserted {new_label} (rank {r_d}) next to {bond} (rank {target.rank} -> {r_tilde})")
    return result
