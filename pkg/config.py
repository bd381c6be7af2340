# config.py
"""Configuration for the multitask learning experiments."""
from dotenv import load_dotenv
load_dotenv()
import os
from pathlib import Path

# Output directory - can be changed with environment variable
OUTPUT_ROOT = Path(os.getenv("MTCOOL_OUTPUT_ROOT", "./runs"))
LOG_FILE = OUTPUT_ROOT / "mtcool.log"

# Desk-scale experiment defaults
DEFAULT_AGENTS = 30
DEFAULT_EDGE_PROBABILITY = 0.9
DEFAULT_DIMENSION = 10
DEFAULT_HORIZON = 20000
DEFAULT_SEEDS = 8
DEFAULT_LAMBDAS = (1e10, 10.0, 9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0)
DEFAULT_LOSS_NOISE_STD = 0.01
DEFAULT_NOISE_SEEDS = 32

# Settings restored by --paper-scale
PAPER_HORIZON = 150000
PAPER_SEEDS = 48

# Operating point of the regret-vs-time curve
FIGURE1_SIGMA_TARGET = 0.08
FIGURE1_LAMBDA_CANDIDATES = (10.0, 9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0)
FIGURE1_CHECKPOINTS = 200

# Exact graph statistics are enumerated up to this many vertices
EXACT_GRAPH_LIMIT = 16
