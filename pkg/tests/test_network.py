import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnconvert.errors import ArgumentError
from tnconvert.network import (
    Bond,
    PhysicalMode,
    TensorNetwork,
    Topology,
    build,
    cycle_order,
    drop_rank_one_bonds,
    grid_layout,
    path_order,
    topology_of,
    validate,
)
from tnconvert.tensor import DenseTensor
from tnconvert.verify import oracle_contract

from .networks import add_rank_one_bond, dense_relative_difference, random_network

parametrize = pytest.mark.parametrize


def test_build_chain():
    """a chain of 4 has 4 bonds and the closing bond between v4 and v1"""
    net = build(Topology.chain(4), 10, 6, seed=42)
    assert net.node_ids == ["v1", "v2", "v3", "v4"]
    assert [(b.label, b.a, b.b, b.rank) for b in net.bond_list] == [
        ("j1", "v1", "v2", 6),
        ("j2", "v2", "v3", 6),
        ("j3", "v3", "v4", 6),
        ("j4", "v4", "v1", 6),
    ]
    assert net.nodes["v1"].labels == ("j1", "j4", "p1")
    assert net.nodes["v1"].shape == (6, 6, 10)
    assert not validate(net)


def test_build_rank_one_train_is_outer_product():
    """a train with all ranks 1 represents the outer product of its node vectors"""
    net = build(Topology.train(3), [2, 3, 4], 1, seed=1)
    vectors = [net.nodes[node].data.ravel() for node in net.node_ids]
    expected = np.multiply.outer(np.multiply.outer(vectors[0], vectors[1]), vectors[2])
    assert np.allclose(oracle_contract(net).data, expected, rtol=1e-14, atol=0)


def test_build_grid_adjacency():
    """a 4x4 grid numbers nodes row-major with horizontals before the verticals of each row"""
    net = build(Topology.grid(4, 4), 2, 2)
    assert len(net.nodes) == 16
    assert len(net.bonds) == 24
    ends = {b.label: (b.a, b.b) for b in net.bond_list}
    assert ends["j1"] == ("v1", "v2")
    assert ends["j3"] == ("v3", "v4")
    assert ends["j4"] == ("v1", "v5")
    assert ends["j7"] == ("v4", "v8")
    assert ends["j8"] == ("v5", "v6")
    assert ends["j24"] == ("v15", "v16")
    assert net.neighbors("v6") == ["v2", "v5", "v7", "v10"]
    assert not validate(net)


def test_build_is_deterministic():
    """the same seed gives the same network and a different seed does not"""
    assert build(Topology.chain(5), 3, 2, seed=7).equals(build(Topology.chain(5), 3, 2, seed=7))
    assert not build(Topology.chain(5), 3, 2, seed=7).equals(build(Topology.chain(5), 3, 2, seed=8))


def test_build_zero_fill():
    """zero fill leaves every tensor zero"""
    net = build(Topology.train(3), 2, 2, fill="zeros")
    assert all(not np.any(tensor.data) for tensor in net.nodes.values())


@parametrize(
    "topology,phys,ranks",
    [
        (Topology.chain(4), [2, 2, 2], 2),
        (Topology.chain(4), 2, [2, 2, 2]),
        (Topology.train(3), 2, 0),
    ],
)
def test_build_rejects_bad_sizes(topology, phys, ranks):
    """physical extents and ranks must match the topology and be positive"""
    with pytest.raises(ArgumentError):
        build(topology, phys, ranks)


@parametrize("kwargs", [dict(kind="chain", d=2), dict(kind="train", d=1), dict(kind="grid", d=4, rows=1, cols=4)])
def test_topology_rejects_degenerate_shapes(kwargs):
    """chains need 3 nodes, trains 2 and grids 2x2"""
    with pytest.raises(ValueError):
        Topology(**kwargs)


def test_validate_reports_extent_mismatch():
    """a tensor mode that disagrees with its bond rank is reported"""
    net = build(Topology.train(3), 2, 2)
    net.nodes["v2"] = DenseTensor(np.ones((3, 2, 2)), ["j1", "j2", "p2"])
    kinds = [violation.kind for violation in validate(net)]
    assert "extent-mismatch" in kinds


def test_validate_reports_disconnected_graph():
    """two nodes without bonds are not a network"""
    net = TensorNetwork()
    net.add_node("a", DenseTensor([1.0, 2.0], ["p"]), PhysicalMode(label="p", dim=2))
    net.add_node("b", DenseTensor([1.0], ["q"]), PhysicalMode(label="q", dim=1))
    assert [violation.kind for violation in validate(net)] == ["disconnected"]


def test_validate_reports_structural_errors():
    """self-loops, missing nodes and missing modes are all reported"""
    net = build(Topology.train(3), 2, 2)
    net.bonds["j9"] = Bond(label="j9", a="v1", b="v1", rank=1)
    net.bonds["j10"] = Bond(label="j10", a="v3", b="v7", rank=1)
    kinds = {violation.kind for violation in validate(net)}
    assert {"self-loop", "unknown-node", "missing-mode"} <= kinds


def test_validate_empty_network():
    """an empty network is invalid"""
    assert [violation.kind for violation in validate(TensorNetwork())] == ["empty"]


@parametrize(
    "net,expected",
    [
        (build(Topology.chain(5), 2, 2), Topology.chain(5)),
        (build(Topology.train(5), 2, 2), Topology.train(5)),
        (build(Topology.grid(3, 3), 2, 2), Topology.grid(3, 3)),
        (build(Topology.grid(2, 3), 2, 2), Topology.grid(2, 3)),
        (build(Topology.grid(2, 2), 2, 2), Topology.chain(4)),
        (build(Topology.chain(5), 2, [2, 2, 1, 2, 2]), Topology.train(5)),
    ],
)
def test_topology_of(net, expected):
    """standard shapes are recognized, rank-1 bonds are ignored"""
    assert topology_of(net) == expected


def test_topology_of_train_with_rank_one_closing_bond():
    """a train closed by a rank-1 bond is still a train"""
    net = add_rank_one_bond(build(Topology.train(4), 2, 2), "x", "v1", "v4")
    assert topology_of(net) == Topology.train(4)
    assert topology_of(net, ignore_rank_one=False) == Topology.chain(4)


def test_drop_rank_one_bonds():
    """dropping the rank-1 closing bond of a train keeps the tensor"""
    train = build(Topology.train(4), 2, 2, seed=1)
    net = add_rank_one_bond(train, "x", "v1", "v4")
    dropped = drop_rank_one_bonds(net)
    assert sorted(dropped.bonds) == ["j1", "j2", "j3"]
    assert not validate(dropped)
    assert dense_relative_difference(train, dropped) <= 1e-14
    assert "x" in net.bonds


def test_drop_rank_one_bonds_keeps_rank_one_networks():
    """an all rank-1 train classifies on its full graph and is left alone"""
    net = build(Topology.train(4), 2, 1)
    assert drop_rank_one_bonds(net) is net


def test_topology_of_general():
    """a star is neither a train, a chain nor a grid"""
    net = random_network(
        [(f"j{k}", "hub", f"leaf{k}", 2) for k in range(3)], {"hub": 2, "leaf0": 2, "leaf1": 2, "leaf2": 2}
    )
    assert topology_of(net).kind == "general"


def test_topology_of_empty():
    """an empty network cannot be classified"""
    with pytest.raises(ArgumentError):
        topology_of(TensorNetwork())


def test_classification_ignores_labels():
    """renaming nodes and bonds does not change the topology"""
    net = build(Topology.grid(3, 2), 2, 2)
    rename = {node: f"site{10 - i}" for i, node in enumerate(net.node_ids)}
    renamed = random_network(
        [(f"e{b.label}", rename[b.a], rename[b.b], b.rank) for b in net.bond_list],
        {node: 2 for node in rename.values()},
    )
    assert topology_of(renamed) == Topology.grid(3, 2)


def test_orders():
    """path and cycle orders start at the smallest id"""
    assert path_order(build(Topology.train(4), 2, 2)) == ["v1", "v2", "v3", "v4"]
    assert cycle_order(build(Topology.chain(4), 2, 2)) == ["v1", "v2", "v3", "v4"]
    assert path_order(build(Topology.chain(4), 2, 2)) is None
    assert cycle_order(build(Topology.train(4), 2, 2)) is None


def test_grid_layout_positions():
    """a built grid is laid out row-major"""
    layout = grid_layout(build(Topology.grid(3, 4), 2, 2))
    assert layout["v1"] == (0, 0)
    assert layout["v4"] == (0, 3)
    assert layout["v5"] == (1, 0)
    assert layout["v12"] == (2, 3)


def test_fresh_bond_label():
    """fresh labels continue the numbering"""
    assert build(Topology.train(4), 2, 2).fresh_bond_label() == "j4"


def test_copy_shares_tensors_but_not_structure():
    """a copy can be rewired without touching the original"""
    net = build(Topology.train(3), 2, 2)
    other = net.copy()
    del other.bonds["j1"]
    assert "j1" in net.bonds
    assert other.nodes["v1"] is net.nodes["v1"]


topologies = st.one_of(
    st.integers(3, 7).map(Topology.chain),
    st.integers(2, 7).map(Topology.train),
    st.tuples(st.integers(2, 4), st.integers(2, 4)).map(lambda shape: Topology.grid(*shape)),
)


@settings(max_examples=100, deadline=None)
@given(topologies, st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_built_networks_are_valid(topology, n, rank, seed):
    """every generated network passes validation and has the requested bond count"""
    net = build(topology, n, rank, seed=seed)
    assert not validate(net)
    assert len(net.bonds) == topology.n_bonds
