"""Byzantine-robust gradient aggregation with repetition and cyclic codes."""

from .codes import (
    CodeParams,
    CyclicTables,
    Scheme,
    build_cyclic_tables,
    cyclic_assignment,
    decode_cyclic,
    decode_repetition,
    detect_adversaries,
    encode_cyclic,
    encode_repetition,
    repetition_assignment,
)
from .numerics import Tolerances
from .simharness import ExperimentConfig, run_experiment
from .threat import AttackSpec

__version__ = "0.1.0"
