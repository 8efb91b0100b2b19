"""Compute-side cost under an in-flight communication.

A communication steals ``NC`` SMs from the compute pool (more waves) and
draws ``V`` bytes/us of global memory bandwidth (slower waves).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import (BandwidthExhaustionError, PartitionMismatchError,
                     SMExhaustionError)
from .model import ComputeOp, GpuSpec


@dataclass(frozen=True)
class ActiveComm:
    num_channels: int
    footprint: float
    comm_id: Optional[str] = None


def _stolen_sms(active, gpu):
    if active is None:
        return 0
    if active.num_channels >= gpu.num_sms:
        raise SMExhaustionError(
            f"{active.num_channels} channels leave no SM of {gpu.num_sms}")
    return active.num_channels if gpu.comm_occupies_sms else 0


def wave_capacity(op: ComputeOp, active: Optional[ActiveComm],
                  gpu: GpuSpec) -> int:
    """Thread blocks resident in one full wave."""
    return (gpu.num_sms - _stolen_sms(active, gpu)) * op.blocks_per_sm


def wave_count(op: ComputeOp, active: Optional[ActiveComm],
               gpu: GpuSpec) -> int:
    return math.ceil(op.total_blocks / wave_capacity(op, active, gpu))


def wave_time(op: ComputeOp, blocks_in_wave: int,
              active: Optional[ActiveComm], gpu: GpuSpec) -> float:
    footprint = 0.0 if active is None else active.footprint
    free_bw = gpu.peak_mem_bw - footprint
    if free_bw <= 0:
        raise BandwidthExhaustionError(
            f"communication draws {footprint} of {gpu.peak_mem_bw} bytes/us")
    return op.base_wave_time + blocks_in_wave * op.bytes_per_block / free_bw


def comp_time_static(op: ComputeOp, assignment, gpu: GpuSpec) -> float:
    """Analytic computation time from an explicit wave assignment.

    ``assignment`` is a sequence of ``(active, n_waves)`` pairs, executed in
    order. The shares must consume the op's blocks exactly: the last wave of
    the last share may be partial, no earlier wave may be.
    """
    remaining = op.total_blocks
    total = 0.0
    for k, (active, n_waves) in enumerate(assignment):
        cap = wave_capacity(op, active, gpu)
        for _ in range(n_waves):
            if remaining <= 0:
                raise PartitionMismatchError(
                    f"share {k} schedules waves after all "
                    f"{op.total_blocks} blocks are done")
            blocks = min(cap, remaining)
            total += wave_time(op, blocks, active, gpu)
            remaining -= blocks
    if remaining:
        raise PartitionMismatchError(
            f"{remaining} of {op.total_blocks} blocks left unscheduled")
    return total


def total_comp_time_static(entries, gpu: GpuSpec) -> float:
    """Sum of :func:`comp_time_static` over ``(op, assignment)`` pairs."""
    return sum((comp_time_static(op, a, gpu) for op, a in entries), 0.0)
