__version__ = "0.1.1"

from .bounds import RankBoundPlan, conversion_cost_model, predict_rank_bounds
from .convert import ConversionReport, convert, peps_to_tt, tc_to_tt, tc_to_tt_to_tc, tt_to_tc
from .errors import ArgumentError, OracleCapExceeded, ParseError, TensorNetworkError, UnsupportedOperationError
from .linalg import SvdSplit, TruncationPolicy, stable_rank_decision, svd_split
from .network import Bond, PhysicalMode, TensorNetwork, Topology, build, topology_of, validate
from .plan import RankSplitStrategy
from .rewire import (
    IndexPairing,
    StepRecord,
    contract_bond,
    insert_artificial_edge,
    merge_parallel_edges,
    move_edge,
    split_node,
)
from .serialization import deserialize, load, save, serialize
from .tensor import DenseTensor, contract, frobenius_norm, matricize, tensorize
from .verify import environment_norm, inner_product, network_norm, oracle_contract, relative_error
