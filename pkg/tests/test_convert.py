import statistics
import sys
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnconvert.bounds import predict_rank_bounds
from tnconvert.convert import convert, peps_to_tt, tc_to_tt, tc_to_tt_to_tc, tt_to_tc
from tnconvert.errors import ArgumentError
from tnconvert.linalg import TruncationPolicy
from tnconvert.network import Topology, build, cycle_order, path_order, topology_of, validate
from tnconvert.plan import RankSplitStrategy
from tnconvert.serialization import serialize
from tnconvert.verify import relative_error

from .networks import add_rank_one_bond

parametrize = pytest.mark.parametrize

APPROX = TruncationPolicy.cutoff(1e-10)


def test_chain_of_four_exact():
    """a chain of 4 with n = 10 and rank 6 becomes a (10, 36, 10) train"""
    chain = build(Topology.chain(4), 10, 6, seed=42)
    train, report = tc_to_tt(chain)
    assert train.ranks() == {"j1": 10, "j2": 36, "j3": 10}
    assert report.avg_rank == pytest.approx(56 / 3)
    assert report.max_rank == 36
    assert [step.kind for step in report.steps] == ["move", "move", "merge"]
    assert report.n_svd_steps == 3
    assert report.cumulative_error_bound == 0.0
    assert report.eliminated_bonds == ["j4"]
    assert report.source == "Chain(4)" and report.target == "Train(4)"
    assert topology_of(train) == Topology.train(4)
    assert not validate(train)
    assert relative_error(chain, train, method="oracle") <= 1e-11


def test_rank_one_chain():
    """a chain of rank-1 bonds converts without discarding anything"""
    train, report = tc_to_tt(build(Topology.chain(5), 3, 1, seed=1), APPROX)
    assert set(train.ranks().values()) == {1}
    assert all(step.discarded_mass == 0.0 for step in report.steps)


def test_small_chain_exact():
    """a chain of 5 is reproduced entry by entry"""
    chain = build(Topology.chain(5), 3, 2, seed=2)
    train, _ = tc_to_tt(chain)
    assert path_order(train) == ["v1", "v2", "v3", "v4", "v5"]
    assert relative_error(chain, train, method="oracle") <= 1e-11


def test_chain_of_ten_approximate():
    """a chain of 10 stays within rank 36 and the requested accuracy"""
    chain = build(Topology.chain(10), 10, 6, seed=3)
    train, report = tc_to_tt(chain, APPROX)
    assert report.max_rank <= 36
    error = relative_error(chain, train)
    assert error <= 1e-6
    assert error <= report.relative_error_bound + 1e-7


@pytest.mark.slow
def test_chain_of_hundred_approximate():
    """a chain of 100 stays within rank 36 and the requested accuracy"""
    chain = build(Topology.chain(100), 10, 6, seed=4)
    train, report = tc_to_tt(chain, APPROX, track_error_bound=False)
    assert report.max_rank <= 36
    assert report.n_svd_steps == 99
    assert relative_error(chain, train) <= 1e-6


def test_rank_one_train_to_chain():
    """a rank-1 train closes into a rank-1 chain"""
    train = build(Topology.train(4), 2, 1, seed=5)
    chain, report = tt_to_tc(train, RankSplitStrategy.parse("fixed:1x1"))
    assert set(chain.ranks().values()) == {1}
    assert report.split == "fixed:1x1"
    assert relative_error(train, chain, method="oracle") <= 1e-14


def test_train_to_chain_exact():
    """a train of 4 closes into a chain representing the same tensor"""
    train = build(Topology.train(4), 3, [2, 4, 2], seed=6)
    chain, report = tt_to_tc(train, RankSplitStrategy.parse("fixed:2x2"))
    assert report.n_svd_steps == 2
    assert chain.rank("j2") == 2 and chain.rank("j4") == 2
    assert topology_of(chain) == Topology.chain(4)
    assert relative_error(train, chain, method="oracle") <= 1e-11


@parametrize("rows,cols", [(2, 2), (2, 3), (3, 3)])
def test_grid_to_train_exact(rows, cols):
    """grids become trains along the snake, exactly"""
    grid = build(Topology.grid(rows, cols), 2, 2, seed=7)
    train, report = peps_to_tt(grid)
    assert len(report.eliminated_bonds) == (rows - 1) * (cols - 1)
    assert report.n_svd_steps == 3 * (rows - 1) * (cols - 1)
    assert path_order(train) is not None
    assert len(train.bonds) == rows * cols - 1
    assert relative_error(grid, train, method="oracle") <= 1e-11


def test_grid_of_four_by_four():
    """a 4x4 grid loses nine bonds"""
    grid = build(Topology.grid(4, 4), 2, 2, seed=8)
    train, report = peps_to_tt(grid, track_error_bound=False)
    assert len(train.nodes) == 16
    assert len(train.bonds) == 15
    assert len(report.eliminated_bonds) == 9
    assert report.node_order[:8] == ["v1", "v2", "v3", "v4", "v8", "v7", "v6", "v5"]
    assert relative_error(grid, train, method="oracle") <= 1e-11


@parametrize("rows,cols,seed", [(3, 3, 21), (4, 4, 22)])
def test_grid_to_train_truncated(rows, cols, seed):
    """a truncated grid conversion stays within its error bound"""
    grid = build(Topology.grid(rows, cols), 2, 2, seed=seed)
    train, report = peps_to_tt(grid, TruncationPolicy.capped(2))
    assert report.max_rank <= 2
    assert report.cumulative_error_bound > 0
    assert all(step.env_norm is not None for step in report.steps if step.discarded_mass > 0)
    assert relative_error(grid, train, method="oracle") <= report.relative_error_bound * (1 + 1e-9) + 1e-12


def test_grid_of_four_by_four_with_wide_bonds():
    """a 4x4 grid of rank 4 converts under a rank cap whether or not its bound is computable"""
    grid = build(Topology.grid(4, 4), 2, 4, seed=5)
    train, report = peps_to_tt(grid, TruncationPolicy.capped(8))
    assert path_order(train) is not None
    assert report.max_rank <= 8
    if report.relative_error_bound is not None:
        assert relative_error(grid, train, method="oracle") <= report.relative_error_bound * (1 + 1e-9) + 1e-12


def test_error_bound_is_dropped_beyond_the_cap(monkeypatch):
    """environments above the cap stop bound tracking but not the conversion"""
    monkeypatch.setattr(sys.modules["tnconvert.convert"], "DEFAULT_ORACLE_CAP", 4)
    grid = build(Topology.grid(3, 3), 2, 2, seed=21)
    train, report = peps_to_tt(grid, TruncationPolicy.capped(2))
    truncated = [step for step in report.steps if step.discarded_mass > 0]
    assert truncated
    assert report.cumulative_error_bound is None
    assert report.relative_error_bound is None
    assert any(step.env_norm is None for step in truncated)
    assert len(train.bonds) == 8


def test_train_with_rank_one_closing_bond_to_chain():
    """the rank-1 bond between the ends of a train is dropped before closing it"""
    train = add_rank_one_bond(build(Topology.train(5), 3, 2, seed=3), "j9", "v1", "v5")
    chain, report = tt_to_tc(train, RankSplitStrategy.parse("fixed:2x2"))
    assert report.source == "Train(5)"
    assert report.eliminated_bonds == ["j9"]
    assert cycle_order(chain) is not None and len(chain.bonds) == 5
    assert relative_error(train, chain, method="oracle") <= 1e-11
    chain, report = convert(train, "tc")
    assert report.conversion == "tt_to_tc"


def test_chain_with_a_rank_one_bond_is_not_converted_to_a_train():
    """a chain that is a train once its rank-1 bond is ignored is not a tc_to_tt input"""
    net = build(Topology.chain(5), 3, [2, 2, 2, 2, 1], seed=4)
    with pytest.raises(ArgumentError):
        tc_to_tt(net)
    with pytest.raises(ArgumentError):
        convert(net, "tt")
    chain, report = convert(net, "tc", split=RankSplitStrategy.parse("fixed:2x2"))
    assert report.source == "Train(5)"
    assert relative_error(net, chain, method="oracle") <= 1e-11


@parametrize(
    "function,net",
    [
        (tc_to_tt, build(Topology.train(4), 2, 2)),
        (tt_to_tc, build(Topology.chain(4), 2, 2)),
        (peps_to_tt, build(Topology.train(5), 2, 2)),
    ],
)
def test_wrong_input_shape(function, net):
    """each conversion rejects inputs of the wrong shape"""
    with pytest.raises(ArgumentError):
        function(net)


def test_invalid_input_network():
    """invalid networks are rejected before any step"""
    net = build(Topology.chain(4), 2, 2)
    net.nodes.pop("v2")
    with pytest.raises(ArgumentError):
        tc_to_tt(net)


def test_convert_dispatch():
    """convert picks the conversion from the input shape"""
    _, report = convert(build(Topology.chain(4), 2, 2), "tt")
    assert report.conversion == "tc_to_tt"
    _, report = convert(build(Topology.train(4), 2, 2), Topology.chain(4))
    assert report.conversion == "tt_to_tc"
    _, report = convert(build(Topology.grid(2, 3), 2, 2), "tt")
    assert report.conversion == "peps_to_tt"
    with pytest.raises(ArgumentError):
        convert(build(Topology.chain(4), 2, 2), Topology.train(5))


def test_conversions_are_deterministic():
    """two runs on the same input give byte-identical output"""
    chain = build(Topology.chain(6), 3, 3, seed=9)
    first, _ = tc_to_tt(chain, APPROX)
    second, _ = tc_to_tt(chain, APPROX)
    assert serialize(first) == serialize(second)


@parametrize(
    "function,net",
    [
        (tc_to_tt, build(Topology.chain(7), 3, 3, seed=10)),
        (tt_to_tc, build(Topology.train(7), 3, 3, seed=11)),
        (peps_to_tt, build(Topology.grid(4, 3), 2, 2, seed=12)),
    ],
)
def test_parallel_matches_sequential(function, net):
    """preparing independent steps concurrently does not change the result"""
    sequential, _ = function(net, policy=APPROX)
    parallel, report = function(net, policy=APPROX, parallel=True, max_workers=2)
    assert report.parallel
    assert serialize(parallel) == serialize(sequential)


def test_error_bound_dominates_error():
    """the reported bound is never below the measured error"""
    chain = build(Topology.chain(6), 3, 3, seed=13)
    train, report = tc_to_tt(chain, TruncationPolicy.capped(2))
    assert report.cumulative_error_bound > 0
    assert all(step.env_norm is not None for step in report.steps if step.discarded_mass > 0)
    assert relative_error(chain, train, method="oracle") <= report.relative_error_bound * (1 + 1e-9) + 1e-12


@parametrize("d", [4, 6, 8, 10])
def test_round_trip_approximate(d):
    """chain to train to chain keeps the tensor"""
    chain = build(Topology.chain(d), 4, 6, seed=d)
    back, first, second = tc_to_tt_to_tc(chain, APPROX, track_error_bound=False)
    assert first.conversion == "tc_to_tt" and second.conversion == "tt_to_tc"
    assert relative_error(chain, back) <= 1e-6


def test_round_trip_exact_inflates_ranks():
    """closing the train again gives larger ranks than the original chain"""
    chain = build(Topology.chain(4), 10, 6, seed=14)
    back, _, second = tc_to_tt_to_tc(chain)
    assert second.avg_rank > 6
    assert back.ranks() == {"j1": 60, "j2": 6, "j3": 60, "j4": 6}
    assert relative_error(chain, back, method="oracle") <= 1e-11


networks = st.one_of(
    st.tuples(st.just("chain"), st.integers(3, 6), st.integers(2, 4), st.integers(1, 3)),
    st.tuples(st.just("train"), st.integers(3, 6), st.integers(2, 4), st.integers(1, 3)),
    st.tuples(st.just("grid"), st.tuples(st.integers(2, 3), st.integers(2, 3)), st.integers(2, 3), st.integers(1, 2)),
)


@settings(max_examples=100, deadline=None)
@given(networks, st.integers(0, 2**32 - 1))
def test_exact_conversions_are_exact_and_bounded(shape, seed):
    """exact conversions keep the tensor and never exceed the predicted ranks"""
    kind, size, n, rank = shape
    topology = Topology.grid(*size) if kind == "grid" else Topology(kind=kind, d=size)
    net = build(topology, n, rank, seed=seed)
    target = "tc" if kind == "train" else "tt"
    result, _ = convert(net, target, track_error_bound=False)
    bounds = predict_rank_bounds(net, target).bounds
    assert all(kept <= bounds[label] for label, kept in result.ranks().items())
    assert relative_error(net, result, method="oracle") <= 1e-11


@pytest.mark.slow
def test_runtime_scales_linearly():
    """doubling the chain length at most about doubles the run time"""

    def median_time(d):
        chain = build(Topology.chain(d), 6, 4, seed=d)
        times = []
        for _ in range(5):
            started = time.perf_counter()
            tc_to_tt(chain, APPROX, track_error_bound=False)
            times.append(time.perf_counter() - started)
        return statistics.median(times)

    assert median_time(32) / median_time(16) <= 3.0
