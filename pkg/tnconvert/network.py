"""The tensor network model, standard topologies, validation and shape classification."""

import re
from collections import defaultdict, deque
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ArgumentError
from .settings import BOND_PREFIX, NODE_PREFIX, PHYSICAL_PREFIX
from .tensor import DenseTensor

_DIGITS = re.compile(r"(\d+)")


def natural_key(label: str):
    """Sort key that orders `j2` before `j10`."""
    return tuple(int(part) if i % 2 else part for i, part in enumerate(_DIGITS.split(label)))


class Bond(BaseModel):
    """An edge of the network. `label` identifies the bond and names the shared mode in both endpoint tensors."""

    model_config = ConfigDict(frozen=True)

    label: str
    a: str
    b: str
    rank: int = Field(ge=1)

    @property
    def ends(self) -> Tuple[str, str]:
        return (self.a, self.b)

    def other(self, node: str) -> str:
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise ArgumentError(f"Node {node!r} is not an endpoint of bond {self.label!r}.")

    def touches(self, node: str) -> bool:
        return node == self.a or node == self.b

    def touches_any(self, nodes) -> bool:
        return self.a in nodes or self.b in nodes

    def ends_in(self, nodes) -> bool:
        return self.a in nodes and self.b in nodes

    def with_rank(self, rank: int) -> "Bond":
        return self.model_copy(update={"rank": rank})


class PhysicalMode(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: str
    dim: int = Field(ge=1)


class Violation(BaseModel):
    """A broken network invariant, as reported by `validate`."""

    kind: str
    message: str
    node: Optional[str] = None
    bond: Optional[str] = None
    expected: Optional[int] = None
    actual: Optional[int] = None

    def __str__(self):
        return f"[{self.kind}] {self.message}"


class Topology(BaseModel):
    """
    Shape of a network's bond graph.

    Args:
        kind: `chain` (single cycle), `train` (path), `grid` (rows x cols lattice) or `general`.
        d: Number of nodes.
        rows: Grid rows, only for `grid`.
        cols: Grid columns, only for `grid`.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["chain", "train", "grid", "general"]
    d: int = Field(ge=1)
    rows: Optional[int] = None
    cols: Optional[int] = None

    @model_validator(mode="after")
    def _check_sizes(self):
        if self.kind == "chain" and self.d < 3:
            raise ValueError(f"A chain needs at least 3 nodes, got {self.d}.")
        if self.kind == "train" and self.d < 2:
            raise ValueError(f"A train needs at least 2 nodes, got {self.d}.")
        if self.kind == "grid":
            if self.rows is None or self.cols is None or self.rows < 2 or self.cols < 2:
                raise ValueError(f"A grid needs rows and cols of at least 2, got {self.rows}x{self.cols}.")
            if self.rows * self.cols != self.d:
                raise ValueError(f"Grid {self.rows}x{self.cols} does not have {self.d} nodes.")
        elif self.rows is not None or self.cols is not None:
            raise ValueError(f"rows and cols only apply to grids, not {self.kind}.")
        return self

    @classmethod
    def chain(cls, d: int) -> "Topology":
        return cls(kind="chain", d=d)

    @classmethod
    def train(cls, d: int) -> "Topology":
        return cls(kind="train", d=d)

    @classmethod
    def grid(cls, rows: int, cols: int) -> "Topology":
        return cls(kind="grid", d=rows * cols, rows=rows, cols=cols)

    @classmethod
    def general(cls, d: int) -> "Topology":
        return cls(kind="general", d=d)

    @property
    def n_bonds(self) -> Optional[int]:
        if self.kind == "chain":
            return self.d
        if self.kind == "train":
            return self.d - 1
        if self.kind == "grid":
            return 2 * self.rows * self.cols - self.rows - self.cols
        return None

    def __str__(self):
        if self.kind == "grid":
            return f"Grid({self.rows}x{self.cols})"
        return f"{self.kind.capitalize()}({self.d})"


class TensorNetwork:
    """
    A labelled multigraph whose nodes hold DenseTensors.

    Every node tensor has one mode per incident bond, named by the bond label, plus its physical mode.
    Tensors are immutable, so copies of a network share them.
    """

    def __init__(
        self,
        nodes: Optional[Dict[str, DenseTensor]] = None,
        bonds: Optional[Iterable[Bond]] = None,
        physical: Optional[Dict[str, Union[PhysicalMode, List[PhysicalMode]]]] = None,
    ):
        self.nodes: Dict[str, DenseTensor] = dict(nodes or {})
        self.bonds: Dict[str, Bond] = {}
        for bond in bonds or []:
            self.add_bond(bond)
        self.physical: Dict[str, List[PhysicalMode]] = {}
        for node, modes in (physical or {}).items():
            self.physical[node] = [modes] if isinstance(modes, PhysicalMode) else list(modes)

    def copy(self) -> "TensorNetwork":
        other = TensorNetwork()
        other.nodes = dict(self.nodes)
        other.bonds = dict(self.bonds)
        other.physical = {node: list(modes) for node, modes in self.physical.items()}
        return other

    def add_bond(self, bond: Bond):
        if bond.label in self.bonds:
            raise ArgumentError(f"Bond label {bond.label!r} is already used.")
        self.bonds[bond.label] = bond

    def add_node(self, node: str, tensor: DenseTensor, physical: Union[PhysicalMode, List[PhysicalMode]]):
        if node in self.nodes:
            raise ArgumentError(f"Node {node!r} already exists.")
        self.nodes[node] = tensor
        self.physical[node] = [physical] if isinstance(physical, PhysicalMode) else list(physical)

    @property
    def node_ids(self) -> List[str]:
        return sorted(self.nodes, key=natural_key)

    @property
    def bond_list(self) -> List[Bond]:
        return [self.bonds[label] for label in sorted(self.bonds, key=natural_key)]

    def bond(self, label: str) -> Bond:
        try:
            return self.bonds[label]
        except KeyError:
            raise ArgumentError(f"Unknown bond {label!r}.") from None

    def rank(self, label: str) -> int:
        return self.bond(label).rank

    def ranks(self) -> Dict[str, int]:
        return {bond.label: bond.rank for bond in self.bond_list}

    def incident_bonds(self, node: str) -> List[Bond]:
        return [bond for bond in self.bond_list if bond.touches(node)]

    def bonds_between(self, u: str, w: str) -> List[Bond]:
        return [bond for bond in self.bond_list if {bond.a, bond.b} == {u, w}]

    def neighbors(self, node: str) -> List[str]:
        return sorted({bond.other(node) for bond in self.incident_bonds(node)}, key=natural_key)

    def physical_mode(self, node: str) -> PhysicalMode:
        modes = self.physical.get(node, [])
        if len(modes) != 1:
            raise ArgumentError(f"Node {node!r} carries {len(modes)} physical modes, expected one.")
        return modes[0]

    def physical_labels(self) -> List[str]:
        return [mode.label for node in self.node_ids for mode in self.physical.get(node, [])]

    def physical_dims(self) -> Dict[str, int]:
        return {mode.label: mode.dim for modes in self.physical.values() for mode in modes}

    def total_dimension(self) -> int:
        return int(np.prod([mode.dim for modes in self.physical.values() for mode in modes], dtype=object))

    def canonical_labels(self, node: str) -> List[str]:
        """Incident bonds in natural label order, then the physical mode(s)."""
        return [bond.label for bond in self.incident_bonds(node)] + [mode.label for mode in self.physical.get(node, [])]

    def canonicalize(self) -> "TensorNetwork":
        """Transpose every node tensor into canonical mode order, in place."""
        for node in self.node_ids:
            labels = self.canonical_labels(node)
            if sorted(labels) == sorted(self.nodes[node].labels):
                self.nodes[node] = self.nodes[node].transpose(labels)
        return self

    def fresh_bond_label(self) -> str:
        numbers = [
            int(match.group(1))
            for label in self.bonds
            if (match := re.fullmatch(rf"{re.escape(BOND_PREFIX)}(\d+)", label)) is not None
        ]
        return f"{BOND_PREFIX}{max(numbers, default=0) + 1}"

    def n_parameters(self) -> int:
        return sum(tensor.size for tensor in self.nodes.values())

    def equals(self, other: "TensorNetwork") -> bool:
        """Bit-exact equality of ids, bonds, physical modes and tensor data."""
        if self.node_ids != other.node_ids or self.bond_list != other.bond_list or self.physical != other.physical:
            return False
        return all(self.nodes[node].equals(other.nodes[node]) for node in self.nodes)

    def __repr__(self):
        return f"TensorNetwork({len(self.nodes)} nodes, {len(self.bonds)} bonds, ranks={list(self.ranks().values())})"


def topology_edges(topology: Topology) -> List[Tuple[int, int]]:
    """
    Edge list of a standard topology over 0-based node indices, in bond label order.

    Chains close with the bond between the last and the first node. Grids are numbered row-major;
    each row contributes its horizontal bonds, then the vertical bonds to the next row.
    """
    d = topology.d
    if topology.kind == "train":
        return [(k, k + 1) for k in range(d - 1)]
    if topology.kind == "chain":
        return [(k, k + 1) for k in range(d - 1)] + [(d - 1, 0)]
    if topology.kind == "grid":
        rows, cols = topology.rows, topology.cols
        edges = []
        for r in range(rows):
            edges.extend((r * cols + c, r * cols + c + 1) for c in range(cols - 1))
            if r < rows - 1:
                edges.extend((r * cols + c, (r + 1) * cols + c) for c in range(cols))
        return edges
    raise ArgumentError(f"Cannot build a network of topology {topology}.")


def _expand(values: Union[int, Sequence[int]], count: int, what: str) -> List[int]:
    if isinstance(values, (int, np.integer)):
        values = [int(values)] * count
    values = [int(v) for v in values]
    if len(values) != count:
        raise ArgumentError(f"Expected {count} {what}, got {len(values)}.")
    if any(v < 1 for v in values):
        raise ArgumentError(f"All {what} must be positive, got {values}.")
    return values


def build(
    topology: Topology,
    phys_dims: Union[int, Sequence[int]],
    ranks: Union[int, Sequence[int]],
    fill: Literal["random", "zeros"] = "random",
    seed: int = 0,
) -> TensorNetwork:
    """
    Build a chain, train or grid network.

    Args:
        topology: The shape to build.
        phys_dims: Physical extent per node, or one extent for all nodes.
        ranks: Rank per bond in label order, or one rank for all bonds.
        fill: `random` draws entries uniformly from [-1, 1] using a Philox generator seeded with `seed`;
            `zeros` leaves every tensor zero.
        seed: Seed for the random fill.

    Returns:
        A network with nodes `v1..vd`, bonds `j1..` and physical modes `p1..pd`.
    """
    edges = topology_edges(topology)
    dims = _expand(phys_dims, topology.d, "physical extents")
    rank_list = _expand(ranks, len(edges), "bond ranks")
    if fill not in ("random", "zeros"):
        raise ArgumentError(f"Unknown fill {fill!r}.")

    net = TensorNetwork()
    node_ids = [f"{NODE_PREFIX}{i + 1}" for i in range(topology.d)]
    for k, ((a, b), rank) in enumerate(zip(edges, rank_list)):
        net.add_bond(Bond(label=f"{BOND_PREFIX}{k + 1}", a=node_ids[a], b=node_ids[b], rank=rank))

    rng = np.random.Generator(np.random.Philox(seed))
    for i, node in enumerate(node_ids):
        net.physical[node] = [PhysicalMode(label=f"{PHYSICAL_PREFIX}{i + 1}", dim=dims[i])]
        labels = net.canonical_labels(node)
        shape = [net.bonds[label].rank for label in labels[:-1]] + [dims[i]]
        data = rng.uniform(-1.0, 1.0, size=shape) if fill == "random" else np.zeros(shape)
        net.nodes[node] = DenseTensor(data, labels)
    logger.debug(f"Built {topology} network with {len(net.bonds)} bonds, fill={fill}, seed={seed}")
    return net


def _connected(nodes: Sequence[str], edges: Sequence[Tuple[str, str, str]]) -> bool:
    if not nodes:
        return False
    adjacency = defaultdict(set)
    for _, a, b in edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    seen = {nodes[0]}
    queue = deque([nodes[0]])
    while queue:
        for nxt in adjacency[queue.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(nodes)


def validate(net: TensorNetwork) -> List[Violation]:
    """Check every structural invariant of `net`. An empty list means the network is valid."""
    violations: List[Violation] = []
    if not net.nodes:
        return [Violation(kind="empty", message="Network has no nodes.")]

    physical_labels = set()
    for node in net.node_ids:
        modes = net.physical.get(node, [])
        if len(modes) != 1:
            violations.append(
                Violation(
                    kind="physical-count",
                    message=f"Node {node} has {len(modes)} physical modes, expected 1.",
                    node=node,
                    expected=1,
                    actual=len(modes),
                )
            )
        physical_labels.update(mode.label for mode in modes)
    for node in net.physical:
        if node not in net.nodes:
            violations.append(
                Violation(kind="unknown-node", message=f"Physical mode of missing node {node}.", node=node)
            )

    for bond in net.bond_list:
        for end in bond.ends:
            if end not in net.nodes:
                violations.append(
                    Violation(
                        kind="unknown-node",
                        message=f"Bond {bond.label} ends at missing node {end}.",
                        bond=bond.label,
                        node=end,
                    )
                )
        if bond.a == bond.b:
            violations.append(
                Violation(kind="self-loop", message=f"Bond {bond.label} is a self-loop.", bond=bond.label)
            )
        if bond.label in physical_labels:
            violations.append(
                Violation(
                    kind="label-clash", message=f"Bond label {bond.label} is also a physical label.", bond=bond.label
                )
            )

    for node in net.node_ids:
        tensor = net.nodes[node]
        expected = {bond.label: bond.rank for bond in net.incident_bonds(node)}
        expected.update({mode.label: mode.dim for mode in net.physical.get(node, [])})
        for label in tensor.labels:
            if label not in expected:
                violations.append(
                    Violation(
                        kind="extra-mode", message=f"Node {node} has mode {label} with no matching bond.", node=node
                    )
                )
        for label, extent in expected.items():
            if label not in tensor.labels:
                violations.append(
                    Violation(
                        kind="missing-mode", message=f"Node {node} has no mode for {label}.", node=node, bond=label
                    )
                )
            elif tensor.extent(label) != extent:
                violations.append(
                    Violation(
                        kind="extent-mismatch",
                        message=f"Node {node} mode {label} has extent {tensor.extent(label)}, expected {extent}.",
                        node=node,
                        bond=label,
                        expected=extent,
                        actual=tensor.extent(label),
                    )
                )

    if not _connected(net.node_ids, _edge_list(net, ignore_rank_one=False)):
        violations.append(Violation(kind="disconnected", message="Bond graph is not connected."))
    return violations


def is_valid(net: TensorNetwork) -> bool:
    return not validate(net)


def _edge_list(net: TensorNetwork, ignore_rank_one: bool) -> List[Tuple[str, str, str]]:
    return [(bond.label, bond.a, bond.b) for bond in net.bond_list if not (ignore_rank_one and bond.rank == 1)]


def _degrees(nodes: Sequence[str], edges) -> Dict[str, int]:
    degree = {node: 0 for node in nodes}
    for _, a, b in edges:
        degree[a] += 1
        degree[b] += 1
    return degree


def _adjacency(edges) -> Dict[str, List[str]]:
    adjacency = defaultdict(list)
    for _, a, b in edges:
        adjacency[a].append(b)
        adjacency[b].append(a)
    return {node: sorted(nbrs, key=natural_key) for node, nbrs in adjacency.items()}


def _path_order(nodes: List[str], edges) -> Optional[List[str]]:
    if len(nodes) < 2 or len(edges) != len(nodes) - 1 or not _connected(nodes, edges):
        return None
    degree = _degrees(nodes, edges)
    if max(degree.values()) > 2:
        return None
    adjacency = _adjacency(edges)
    order = [min((node for node in nodes if degree[node] == 1), key=natural_key)]
    while len(order) < len(nodes):
        order.append(next(nxt for nxt in adjacency[order[-1]] if nxt not in order[-2:]))
    return order


def _cycle_order(nodes: List[str], edges) -> Optional[List[str]]:
    if len(nodes) < 3 or len(edges) != len(nodes) or not _connected(nodes, edges):
        return None
    if any(deg != 2 for deg in _degrees(nodes, edges).values()):
        return None
    adjacency = _adjacency(edges)
    order = [nodes[0]]
    previous = None
    while len(order) < len(nodes):
        nxt = next(node for node in adjacency[order[-1]] if node != previous)
        previous = order[-1]
        order.append(nxt)
    return order


def _grid_layout(nodes: List[str], edges) -> Optional[Dict[str, Tuple[int, int]]]:
    if len(nodes) < 4:
        return None
    pairs = [frozenset((a, b)) for _, a, b in edges]
    if len(set(pairs)) != len(pairs):
        return None
    degree = _degrees(nodes, edges)
    if any(deg not in (2, 3, 4) for deg in degree.values()):
        return None
    adjacency = {node: set(nbrs) for node, nbrs in _adjacency(edges).items()}
    corners = [node for node in nodes if degree[node] == 2]
    if not corners:
        return None

    start = corners[0]
    right, down = sorted(adjacency[start], key=natural_key)
    grid: Dict[Tuple[int, int], str] = {(0, 0): start, (0, 1): right, (1, 0): down}
    placed = {start, right, down}
    common = (adjacency[right] & adjacency[down]) - {start}
    if len(common) != 1:
        return None
    grid[(1, 1)] = common.pop()
    placed.add(grid[(1, 1)])

    # first two rows grow together, column by column
    cols = 2
    while True:
        ahead = adjacency[grid[(0, cols - 1)]] - placed
        if not ahead:
            break
        if len(ahead) != 1:
            return None
        top = ahead.pop()
        below = (adjacency[grid[(1, cols - 1)]] & adjacency[top]) - placed
        if len(below) != 1:
            return None
        grid[(0, cols)] = top
        grid[(1, cols)] = below.pop()
        placed.update((grid[(0, cols)], grid[(1, cols)]))
        cols += 1

    rows = 2
    while True:
        ahead = adjacency[grid[(rows - 1, 0)]] - placed
        if not ahead:
            break
        for c in range(cols):
            ahead = adjacency[grid[(rows - 1, c)]] - placed
            if len(ahead) != 1:
                return None
            grid[(rows, c)] = ahead.pop()
            placed.add(grid[(rows, c)])
        rows += 1

    if len(placed) != len(nodes) or rows * cols != len(nodes):
        return None
    expected = set()
    for (r, c), node in grid.items():
        if c + 1 < cols:
            expected.add(frozenset((node, grid[(r, c + 1)])))
        if r + 1 < rows:
            expected.add(frozenset((node, grid[(r + 1, c)])))
    if expected != set(pairs):
        return None
    return {node: position for position, node in grid.items()}


def path_order(net: TensorNetwork, ignore_rank_one: bool = False) -> Optional[List[str]]:
    """Nodes of a path-shaped network from the end with the smaller id, or None."""
    return _path_order(net.node_ids, _edge_list(net, ignore_rank_one))


def cycle_order(net: TensorNetwork, ignore_rank_one: bool = False) -> Optional[List[str]]:
    """Nodes of a cycle-shaped network starting at the smallest id and stepping to its smaller neighbor, or None."""
    return _cycle_order(net.node_ids, _edge_list(net, ignore_rank_one))


def grid_layout(net: TensorNetwork, ignore_rank_one: bool = False) -> Optional[Dict[str, Tuple[int, int]]]:
    """
    Recover the (row, col) position of every node of a grid-shaped network.

    The smallest corner id is placed at (0, 0) and its smaller neighbor at (0, 1).
    Returns None if the bond graph is not a lattice of at least 2x2 nodes.
    """
    return _grid_layout(net.node_ids, _edge_list(net, ignore_rank_one))


def _classify(nodes: List[str], edges) -> Topology:
    if _path_order(nodes, edges) is not None:
        return Topology.train(len(nodes))
    if _cycle_order(nodes, edges) is not None:
        return Topology.chain(len(nodes))
    layout = _grid_layout(nodes, edges)
    if layout is not None:
        rows = max(r for r, _ in layout.values()) + 1
        cols = max(c for _, c in layout.values()) + 1
        return Topology.grid(rows, cols)
    return Topology.general(len(nodes))


def topology_of(net: TensorNetwork, ignore_rank_one: bool = True) -> Topology:
    """
    Classify the bond graph as a train, chain, grid or general network.

    Rank-1 bonds carry no correlation and are left out when the remaining graph is still connected.
    A 2x2 grid is a 4-cycle and is reported as a chain.
    """
    nodes = net.node_ids
    if not nodes:
        raise ArgumentError("Cannot classify an empty network.")
    if ignore_rank_one:
        reduced = _edge_list(net, ignore_rank_one=True)
        if len(reduced) < len(net.bonds) and _connected(nodes, reduced):
            return _classify(nodes, reduced)
    return _classify(nodes, _edge_list(net, ignore_rank_one=False))


def drop_rank_one_bonds(net: TensorNetwork) -> TensorNetwork:
    """
    Remove the rank-1 bonds that `topology_of` leaves out, squeezing their unit modes from both ends.

    Summing over a single index value is a plain product, so the represented tensor is unchanged.
    Returns `net` itself when classification uses the full bond graph.
    """
    if topology_of(net) == topology_of(net, ignore_rank_one=False):
        return net
    result = net.copy()
    for bond in net.bond_list:
        if bond.rank != 1:
            continue
        del result.bonds[bond.label]
        for node in bond.ends:
            tensor = result.nodes[node]
            labels = [label for label in tensor.labels if label != bond.label]
            result.nodes[node] = DenseTensor(np.squeeze(tensor.data, axis=tensor.axis(bond.label)), labels)
    logger.debug(f"Dropped {len(net.bonds) - len(result.bonds)} rank-1 bonds before conversion")
    return result
