"""Configuration settings for roadside relay scheduling."""

import os
from fractions import Fraction

# Cost model
PRICE_PER_MB = Fraction(1)          # dollars paid to a vehicle per relayed MB
DIRECT_PRICE_PER_MB = Fraction(1)   # LPWAN subscription price per MB (no relay)
UNIT_SIZE_BYTES = 1024              # one data unit = what a sensor sends in one slot
BYTES_PER_MB = 2 ** 20

# Sensor and budget parameters
RANGE_M = 2000.0
GEN_RATE = Fraction(1)              # data units per second (1 KB/sec at 1 KB units)
C_MIN = Fraction(2)                 # minimum compensation of a participant, dollars
C_MAX = Fraction(1000)              # total budget, dollars
FAIRNESS_WEIGHT = Fraction(1, 2)
DELAY_BOUND_S = Fraction(60)
DELAY_TOLERANCE = Fraction(0)

# Time grid
DAY_SECONDS = 24 * 60 * 60

# Geodesy
EARTH_RADIUS_M = 6_371_000.0

# Fairness sweep grid: 0.00 .. 1.00 step 0.05
FAIRNESS_GRID = tuple(Fraction(k, 20) for k in range(21))

# Delay tolerance sweep grid (fraction of the delay bound)
DELAY_TOLERANCE_GRID = tuple(Fraction(k, 10) for k in range(6))

# Solvers
BRUTEFORCE_MAX_VARS = 25
SOLVER_LOG_EVERY_NODES = 100_000

# Penetration experiments
PENETRATION_RATES = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))
PENETRATION_SEEDS = (0, 1, 2, 3, 4)

# Deployment experiments
N_SENSORS = 10
N_DEPLOYMENTS = 10

# Bench
BENCH_SIZES = (10, 50, 100)
BENCH_HORIZON_S = 600
BENCH_BBOX = (39.85, 116.30, 39.95, 116.45)  # (lat_min, lon_min, lat_max, lon_max)
# compensation scaled to the bench horizon
BENCH_C_MIN = Fraction(1, 20)       # 52 units to participate
BENCH_C_MAX = Fraction(1)           # 1024 units

# Scenario files
SCHEMA_VERSION = 1

# Output and solver limits may be overridden from the environment
OUTPUT_DIR = os.environ.get("ROADSIDE_RELAY_OUTPUT_DIR", "runs")

_time_limit = os.environ.get("ROADSIDE_RELAY_TIME_LIMIT")
SOLVE_TIME_LIMIT_S = float(_time_limit) if _time_limit else 60.0
