"""Event-driven co-simulation of one compute stream and one comm stream.

Scheduling rules:

* Compute ops run back to back in list order, one wave at a time. A wave
  samples the communication in flight at its start instant (if any) and
  keeps that contention for its whole duration.
* Comm ``j`` starts once comm ``j-1`` has finished and its ``ready_after``
  compute op has completed. A comm starting at the same instant as a wave is
  visible to that wave.
* With ``compute_on_comm_slowdown`` (delta) > 0 a communication progresses
  at rate ``1 / (1 + delta)`` while a compute wave is in flight, and at
  full rate otherwise.
"""

from __future__ import annotations

import json
import math
from typing import NamedTuple, Optional

from . import commperf
from .contention import ActiveComm, wave_capacity, wave_time
from .model import (SimResult, TimelineEntry, WaveRecord, Workload,
                    validate_configs)

COMPUTE = "compute"
COMM = "comm"


class Measurement(NamedTuple):
    x: tuple
    X: float
    Y: float
    Z: float
    # when the comm stream finished; equals X unless dependencies left gaps
    comm_end: Optional[float] = None


class _Comm:
    __slots__ = ("j", "start", "anchor_t", "remaining", "rate", "active")

    def __init__(self, j, start, base, rate, active):
        self.j = j
        self.start = start
        self.anchor_t = start
        self.remaining = base
        self.rate = rate
        self.active = active

    def end_time(self):
        if self.rate == 1.0:
            return self.anchor_t + self.remaining
        return self.anchor_t + self.remaining / self.rate

    def set_rate(self, t, rate):
        if rate == self.rate:
            return
        self.remaining = max(0.0, self.remaining - (t - self.anchor_t) * self.rate)
        self.anchor_t = t
        self.rate = rate


def simulate(workload: Workload, configs, params=None) -> SimResult:
    """Run both streams to completion and return per-op times and totals."""
    if params is None:
        params = commperf.SubspaceParams.default()
    configs = validate_configs(workload, configs)
    gpu = workload.gpu
    comps = workload.compute_ops
    comms = workload.comm_ops
    M, N = len(comps), len(comms)
    slow_rate = 1.0 / (1.0 + gpu.compute_on_comm_slowdown)

    comp_index = {op.id: i for i, op in enumerate(comps)}
    deps = [None if op.ready_after is None else comp_index[op.ready_after]
            for op in comms]
    base = [commperf.comm_time(op, cfg, gpu, params)
            for op, cfg in zip(comms, configs)]
    actives = [ActiveComm(cfg.num_channels,
                          commperf.mem_footprint(cfg, gpu, params), op.id)
               for op, cfg in zip(comms, configs)]

    comp_done = [None] * M
    comp_start = [0.0] * M
    comm_start = [0.0] * N
    comm_end = [0.0] * N
    waves = []

    t = 0.0
    ci = 0
    remaining = comps[0].total_blocks if M else 0
    wave = None  # (start, end, blocks, active)
    cj = 0
    cur = None

    while True:
        # comm-first: a comm startable at t is visible to a wave starting at t
        if cur is None and cj < N:
            d = deps[cj]
            if d is None or comp_done[d] is not None:
                rate = slow_rate if wave is not None else 1.0
                cur = _Comm(cj, t, base[cj], rate, actives[cj])
                comm_start[cj] = t
        if wave is None and ci < M:
            op = comps[ci]
            active = cur.active if cur is not None else None
            blocks = min(wave_capacity(op, active, gpu), remaining)
            wave = (t, t + wave_time(op, blocks, active, gpu), blocks, active)
            if cur is not None:
                cur.set_rate(t, slow_rate)
        if wave is None and cur is None:
            break

        t_wave = wave[1] if wave is not None else math.inf
        t_comm = cur.end_time() if cur is not None else math.inf
        t = min(t_wave, t_comm)

        if cur is not None and t_comm <= t_wave:
            comm_end[cur.j] = t
            cur = None
            cj += 1
        if wave is not None and t_wave <= t_comm:
            start, end, blocks, active = wave
            waves.append(WaveRecord(comps[ci].id, start, end - start, blocks,
                                    None if active is None else active.comm_id))
            wave = None
            remaining -= blocks
            if remaining == 0:
                comp_done[ci] = t
                ci += 1
                if ci < M:
                    comp_start[ci] = t
                    remaining = comps[ci].total_blocks
            if cur is not None:
                cur.set_rate(t, 1.0)

    comp_times = [comp_done[i] - comp_start[i] for i in range(M)]
    comm_times = [comm_end[j] - comm_start[j] for j in range(N)]
    timeline = [TimelineEntry(COMPUTE, op.id, comp_start[i], comp_times[i])
                for i, op in enumerate(comps)]
    timeline += [TimelineEntry(COMM, op.id, comm_start[j], comm_times[j])
                 for j, op in enumerate(comms)]
    makespan = max([0.0] + [comp_done[-1] if M else 0.0] + comm_end)
    return SimResult(
        comp_times=comp_times,
        comm_times=comm_times,
        total_compute=sum(comp_times),
        total_comm=sum(comm_times),
        makespan=makespan,
        timeline=timeline,
        waves=waves,
    )


def profile(workload: Workload, configs, params=None) -> Measurement:
    r = simulate(workload, configs, params)
    comm_end = max((e.start + e.duration for e in r.timeline
                    if e.stream == COMM), default=0.0)
    return Measurement(tuple(r.comm_times), r.total_comm, r.total_compute,
                       r.makespan, comm_end)


_TRACKS = {COMPUTE: 0, COMM: 1}


def export_trace(result: SimResult, waves=False) -> list:
    """Chrome trace events (``"ph": "X"``), one per op; ts/dur in us.

    With ``waves=True`` every compute wave is added on a third track.
    """
    events = [{"name": e.op_id, "cat": e.stream, "ph": "X", "ts": e.start,
               "dur": e.duration, "pid": 0, "tid": _TRACKS[e.stream]}
              for e in result.timeline]
    if waves:
        events += [{"name": w.op_id, "cat": "wave", "ph": "X", "ts": w.start,
                    "dur": w.duration, "pid": 0, "tid": 2,
                    "args": {"blocks": w.blocks, "comm": w.comm_id}}
                   for w in result.waves]
    return events


def write_trace(path, result: SimResult, waves=False):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(export_trace(result, waves), fh)
