"""Overlay routing with a random-neural-network learning agent, replayed
against measured or synthetic link traces."""

from .agent import AgentConfig, RoundOutcome, RoutingAgent, reward_from_probe
from .errors import SmartOverlayError
from .experiment import ExperimentConfig, load_config, run_experiment
from .ingest import export_trace, import_ping_log, load_trace
from .oracle import AggregateStats, RoundReport, aggregate, optimal_path, oracle_series
from .overlay import (
    OverlayPath,
    OverlayTopology,
    SmartHeader,
    decode_header,
    encode_header,
    enumerate_paths,
    forward,
)
from .probing import probe_path, stamp_probe
from .rnn import RnnState, new_rnn, renormalize, solve_fixed_point, stationary_probability
from .trace import GeneratorSpec, LinkTrace, generate_trace

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "AggregateStats",
    "ExperimentConfig",
    "GeneratorSpec",
    "LinkTrace",
    "OverlayPath",
    "OverlayTopology",
    "RnnState",
    "RoundOutcome",
    "RoundReport",
    "RoutingAgent",
    "SmartHeader",
    "SmartOverlayError",
    "aggregate",
    "decode_header",
    "encode_header",
    "enumerate_paths",
    "export_trace",
    "forward",
    "generate_trace",
    "import_ping_log",
    "load_config",
    "load_trace",
    "new_rnn",
    "optimal_path",
    "oracle_series",
    "probe_path",
    "renormalize",
    "reward_from_probe",
    "run_experiment",
    "solve_fixed_point",
    "stamp_probe",
    "stationary_probability",
]
