import os

# Oracle contractions refuse to materialize more entries than this.
DEFAULT_ORACLE_CAP = int(os.environ.get("TNCONVERT_ORACLE_CAP", 2**20))

EXACT_TOLERANCE = 1e-11
INNER_PRODUCT_CLAMP = 1e-14
# Relative errors obtained from expanded inner products cannot resolve below roughly sqrt(eps).
INNER_PRODUCT_ERROR_FLOOR = 1e-7

DEFAULT_MAX_WORKERS = min(8, os.cpu_count() or 1)

INTERCHANGE_VERSION = 1
PRNG_NAME = "philox"

NODE_PREFIX = "v"
BOND_PREFIX = "j"
PHYSICAL_PREFIX = "p"
BRA_SUFFIX = "'"

BENCH_CSV_VERSION = 1
BENCH_MAX_MATRIX_ENTRIES = 10**6
BENCH_DEFAULT_N = 10
BENCH_DEFAULT_RANK = 6
BENCH_DEFAULT_EPS = 1e-10
