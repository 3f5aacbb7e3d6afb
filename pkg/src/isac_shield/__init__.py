"""KLD-based ambiguity-function shaping for sensing-secure OFDM/OTFS ISAC."""

from .config import ScenarioConfig, SaSettings, case_study, load_config, table1, table2
from .detection import CfarConfig, ca_cfar, detection_probability
from .harness import (
    ExperimentResult,
    emit_results,
    run_case_study,
    run_detection_sweep,
    run_eve_mode_comparison,
    run_tradeoff_sweep,
)
from .optimizer import Objective, evaluate_objective, optimize_for_sequence, simulated_annealing
from .waveform import PerturbationWeights, WaveformKind

__version__ = "0.1.0"

__all__ = [
    "CfarConfig",
    "ExperimentResult",
    "Objective",
    "PerturbationWeights",
    "SaSettings",
    "ScenarioConfig",
    "WaveformKind",
    "ca_cfar",
    "case_study",
    "detection_probability",
    "emit_results",
    "evaluate_objective",
    "load_config",
    "optimize_for_sequence",
    "run_case_study",
    "run_detection_sweep",
    "run_eve_mode_comparison",
    "run_tradeoff_sweep",
    "simulated_annealing",
    "table1",
    "table2",
]
