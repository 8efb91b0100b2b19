"""Simulation and priority-guided tuning of communication/computation overlap."""

__version__ = "0.1.0"

from .commperf import SubspaceParams, comm_time, mem_footprint
from .estimators import ExhaustiveTuner, LagomTuner, SequentialTuner
from .model import (Algorithm, Collective, CommBounds, CommConfig, CommOp,
                    ComputeOp, GpuSpec, Protocol, SimResult, Transport,
                    Workload, validate)
from .oracle import exhaustive, sequential_naive
from .simulator import export_trace, profile, simulate
from .tuner import check_boundary, compute_H, step_resource, tune

__all__ = [
    "Algorithm", "Collective", "CommBounds", "CommConfig", "CommOp",
    "ComputeOp", "ExhaustiveTuner", "GpuSpec", "LagomTuner", "Protocol",
    "SequentialTuner", "SimResult", "SubspaceParams", "Transport", "Workload",
    "check_boundary", "comm_time", "compute_H", "exhaustive", "export_trace",
    "mem_footprint", "profile", "sequential_naive", "simulate",
    "step_resource", "tune", "validate",
]
