"""Ground truth: the dense contraction oracle, transfer-sweep inner products, relative errors and error bounds."""

import math
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from .errors import ArgumentError, OracleCapExceeded, UnsupportedOperationError
from .network import TensorNetwork, cycle_order, grid_layout, natural_key, path_order
from .settings import BRA_SUFFIX, DEFAULT_ORACLE_CAP, INNER_PRODUCT_CLAMP
from .tensor import DenseTensor, contract, frobenius_norm


def _pair_size(a: DenseTensor, b: DenseTensor) -> int:
    shared = set(a.labels) & set(b.labels)
    size = 1
    for tensor in (a, b):
        for label, extent in zip(tensor.labels, tensor.shape):
            if label not in shared:
                size *= extent
    return size


def _greedy_contract(tensors: List[DenseTensor], cap: Optional[int], rng: Optional[np.random.Generator]) -> DenseTensor:
    """Contract tensors pairwise, picking the pair with the smallest result, or a random connected pair."""
    tensors = list(tensors)
    while len(tensors) > 1:
        candidates = [
            (i, j)
            for i in range(len(tensors))
            for j in range(i + 1, len(tensors))
            if set(tensors[i].labels) & set(tensors[j].labels)
        ]
        if not candidates:
            candidates = [(0, 1)]
        if rng is not None:
            i, j = candidates[int(rng.integers(len(candidates)))]
        else:
            i, j = min(candidates, key=lambda pair: (_pair_size(tensors[pair[0]], tensors[pair[1]]), pair))
        size = _pair_size(tensors[i], tensors[j])
        if cap is not None and size > cap:
            raise OracleCapExceeded(size, cap)
        shared = [label for label in tensors[i].labels if label in tensors[j].labels]
        merged = contract(tensors[i], tensors[j], shared)
        tensors = [t for k, t in enumerate(tensors) if k not in (i, j)] + [merged]
    return tensors[0]


def oracle_contract(
    net: TensorNetwork, cap: int = DEFAULT_ORACLE_CAP, rng: Optional[np.random.Generator] = None
) -> DenseTensor:
    """
    Evaluate the full tensor a network represents.

    Args:
        net: The network.
        cap: Largest number of entries the result or any intermediate may have.
        rng: If given, contract in a random order instead of the greedy smallest-intermediate order.

    Returns:
        A DenseTensor whose modes are the physical modes in node order.
    """
    total = net.total_dimension()
    if total > cap:
        raise OracleCapExceeded(total, cap)
    result = _greedy_contract([net.nodes[node] for node in net.node_ids], cap, rng)
    return result.transpose(net.physical_labels())


def _sequential_order(net: TensorNetwork) -> Optional[List[str]]:
    return path_order(net) or cycle_order(net)


def _bra(net: TensorNetwork, node: str, open_labels: Sequence[str] = ()) -> DenseTensor:
    physical = {mode.label for mode in net.physical.get(node, [])}
    keep = physical | set(open_labels)
    tensor = net.nodes[node]
    return tensor.relabel({label: label + BRA_SUFFIX for label in tensor.labels if label not in keep})


def _sweep(pairs: Sequence[Tuple[DenseTensor, DenseTensor]], cap: Optional[int] = None) -> float:
    """Accumulate ket and bra tensors pairwise into one environment and return the resulting scalar."""
    env = None
    for ket, bra in pairs:
        for tensor in (ket, bra):
            if env is None:
                env = tensor
                continue
            if cap is not None and _pair_size(env, tensor) > cap:
                raise OracleCapExceeded(_pair_size(env, tensor), cap)
            env = contract(env, tensor, [label for label in env.labels if label in tensor.labels])
    if env is None:
        return 1.0
    if env.ndim:
        raise ArgumentError(f"Sweep left open modes {list(env.labels)}.")
    return float(env.data)


def _check_same_physical(a: TensorNetwork, b: TensorNetwork):
    if a.physical_dims() != b.physical_dims():
        raise ArgumentError("Networks do not have the same physical modes and extents.")
    for net in (a, b):
        if any(len(modes) != 1 for modes in net.physical.values()):
            raise ArgumentError("Every node must carry exactly one physical mode.")


def inner_product(a: TensorNetwork, b: TensorNetwork) -> float:
    """
    `<a, b>` by a transfer sweep along the train or chain order of `a`.

    Nodes of `b` are matched to nodes of `a` through their physical labels.

    Raises:
        UnsupportedOperationError: if either network is not a train or a chain.
    """
    _check_same_physical(a, b)
    order = _sequential_order(a)
    if order is None or _sequential_order(b) is None:
        raise UnsupportedOperationError("Inner products by sweeping need train or chain networks.")
    owner = {b.physical_mode(node).label: node for node in b.nodes}
    pairs = [(a.nodes[node], _bra(b, owner[a.physical_mode(node).label])) for node in order]
    return _sweep(pairs)


def network_norm(net: TensorNetwork, cap: int = DEFAULT_ORACLE_CAP) -> float:
    """Frobenius norm of the represented tensor, by sweeping when possible and by the oracle otherwise."""
    if _sequential_order(net) is not None:
        return math.sqrt(max(inner_product(net, net), 0.0))
    layout = grid_layout(net)
    if layout is not None:
        try:
            return environment_norm(net, [], cap=cap, order=sorted(layout, key=layout.get))
        except UnsupportedOperationError:
            logger.warning("Row sweep of the grid exceeds the cap; falling back to the dense oracle.")
    return frobenius_norm(oracle_contract(net, cap=cap))


def _inner_relative_error(a: TensorNetwork, b: TensorNetwork) -> float:
    aa, ab, bb = inner_product(a, a), inner_product(a, b), inner_product(b, b)
    if aa <= 0.0:
        if bb <= 0.0:
            return 0.0
        raise ArgumentError("Reference network represents the zero tensor.")
    radicand = aa - 2.0 * ab + bb
    if radicand < 0.0:
        if -radicand > INNER_PRODUCT_CLAMP * aa:
            logger.warning(f"Squared difference {radicand:.3e} is negative beyond the clamp floor; clamping to 0.")
        else:
            logger.debug(f"Clamping squared difference {radicand:.3e} to 0.")
        radicand = 0.0
    return math.sqrt(radicand / aa)


def _oracle_relative_error(a: TensorNetwork, b: TensorNetwork, cap: int) -> float:
    dense_a = oracle_contract(a, cap=cap)
    dense_b = oracle_contract(b, cap=cap).transpose(dense_a.labels)
    reference = frobenius_norm(dense_a)
    difference = float(np.linalg.norm((dense_a.data - dense_b.data).ravel()))
    if reference == 0.0:
        if difference == 0.0:
            return 0.0
        raise ArgumentError("Reference network represents the zero tensor.")
    return difference / reference


def resolve_method(a: TensorNetwork, b: TensorNetwork, method: str = "auto") -> str:
    """The comparison `relative_error` uses: `inner` when asked or when both networks are trains or chains."""
    if method not in ("auto", "inner", "oracle"):
        raise ArgumentError(f"Unknown method {method!r}.")
    if method != "auto":
        return method
    return "inner" if _sequential_order(a) is not None and _sequential_order(b) is not None else "oracle"


def relative_error(
    a: TensorNetwork,
    b: TensorNetwork,
    method: Literal["auto", "inner", "oracle"] = "auto",
    cap: int = DEFAULT_ORACLE_CAP,
) -> float:
    """
    `||a - b|| / ||a||`.

    Args:
        a: Reference network.
        b: Network to compare, with the same physical modes.
        method: `inner` expands the squared difference into inner products; `oracle` compares dense tensors;
            `auto` prefers `inner` when both networks are trains or chains.
        cap: Oracle size cap.
    """
    _check_same_physical(a, b)
    if resolve_method(a, b, method) == "inner":
        return _inner_relative_error(a, b)
    try:
        return _oracle_relative_error(a, b, cap)
    except OracleCapExceeded as e:
        raise UnsupportedOperationError(f"Neither inner products nor the oracle can compare these networks: {e}") from e


def _components(net: TensorNetwork, nodes: set) -> List[List[str]]:
    remaining = sorted(nodes, key=natural_key)
    components = []
    while remaining:
        stack, seen = [remaining[0]], {remaining[0]}
        while stack:
            node = stack.pop()
            for nxt in net.neighbors(node):
                if nxt in nodes and nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        components.append([node for node in remaining if node in seen])
        remaining = [node for node in remaining if node not in seen]
    return components


def _sweep_order(net: TensorNetwork, component: List[str]) -> Tuple[List[str], bool]:
    """Order for a double layer sweep; the flag says whether it is a train or chain order."""
    sub = TensorNetwork(
        nodes={node: net.nodes[node] for node in component},
        bonds=[bond for bond in net.bond_list if bond.a in component and bond.b in component],
    )
    order = path_order(sub) or cycle_order(sub)
    if order is not None:
        return order, True
    # breadth first keeps the open boundary of the sweep small on lattices
    order, frontier = [component[0]], [component[0]]
    while frontier:
        nxt = []
        for node in frontier:
            for other in net.neighbors(node):
                if other in component and other not in order:
                    order.append(other)
                    nxt.append(other)
        frontier = nxt
    return order, False


def _fused_sweep(pairs: Sequence[Tuple[DenseTensor, DenseTensor]], cap: Optional[int]) -> float:
    """Like `_sweep`, but each ket is closed with its bra before it joins the environment."""
    env = None
    for ket, bra in pairs:
        if cap is not None and _pair_size(ket, bra) > cap:
            raise OracleCapExceeded(_pair_size(ket, bra), cap)
        site = contract(ket, bra, [label for label in ket.labels if label in bra.labels])
        if env is None:
            env = site
            continue
        if cap is not None and _pair_size(env, site) > cap:
            raise OracleCapExceeded(_pair_size(env, site), cap)
        env = contract(env, site, [label for label in env.labels if label in site.labels])
    if env is None:
        return 1.0
    if env.ndim:
        raise ArgumentError(f"Sweep left open modes {list(env.labels)}.")
    return float(env.data)


def environment_norm(
    net: TensorNetwork,
    excluded_nodes: Sequence[str],
    cap: int = DEFAULT_ORACLE_CAP,
    order: Optional[Sequence[str]] = None,
) -> float:
    """
    Frobenius norm of the network with `excluded_nodes` removed and their bonds left open.

    Each connected piece of the remainder is swept as a ket/bra double layer; the norm is the product
    of the pieces' norms. An empty remainder has norm 1.

    Args:
        net: The network.
        excluded_nodes: Nodes to leave out, usually the pair a rewiring step replaces.
        cap: Largest intermediate of a piece that is neither a train nor a chain.
        order: Sweep order for such pieces, e.g. the rows of a grid one after the other.
            Breadth first from the piece's first node when omitted.

    Raises:
        UnsupportedOperationError: if a piece that is neither a train nor a chain would exceed `cap`.
    """
    excluded = set(excluded_nodes)
    unknown = excluded - set(net.nodes)
    if unknown:
        raise ArgumentError(f"Unknown nodes {sorted(unknown)}.")
    remainder = set(net.nodes) - excluded
    severed = {bond.label for bond in net.bond_list if bond.touches_any(excluded) and not bond.ends_in(excluded)}
    squared = 1.0
    for component in _components(net, remainder):
        sweep_order, sequential = _sweep_order(net, component)
        if not sequential and order is not None:
            members = set(component)
            sweep_order = [node for node in order if node in members]
            sweep_order += [node for node in component if node not in sweep_order]
        pairs = [(net.nodes[node], _bra(net, node, severed)) for node in sweep_order]
        try:
            if sequential:
                squared *= max(_sweep(pairs), 0.0)
            else:
                squared *= max(_fused_sweep(pairs, cap), 0.0)
        except OracleCapExceeded as e:
            raise UnsupportedOperationError(f"Environment is too large to evaluate: {e}") from e
    return math.sqrt(squared)


class ErrorBudgetEntry(BaseModel):
    step: int
    env_norm: float = Field(ge=0)
    discarded_mass: float = Field(ge=0)
    bound: float = Field(ge=0)


class ErrorBudget(BaseModel):
    """Per-step truncation error bounds, summed by the triangle inequality."""

    entries: List[ErrorBudgetEntry] = []
    cumulative: float = 0.0

    def add(self, step: int, env_norm: float, discarded_mass: float) -> float:
        bound = env_norm * discarded_mass
        self.entries.append(ErrorBudgetEntry(step=step, env_norm=env_norm, discarded_mass=discarded_mass, bound=bound))
        self.cumulative += bound
        return bound
