"""Priority-guided co-tuning of communication resources.

Each communication starts from its minimum resources (NC, NT, C) and grows
them multiplicatively by its own relative improvement in communication
time. At every iteration the unfinished communication whose last step cost
the least compute time per microsecond of communication saved (lowest
``H``) is stepped next. A communication stops when its time regresses, when
the overlap turns compute-bound (``X' < Y'``), or when it cannot grow.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import commperf
from .model import (CHUNK_GRANULARITY, KIB, MIB, NC_MIN, NT_LADDER, NT_MAX,
                    NT_MIN, Algorithm, CommConfig, CommOp, GpuSpec, Protocol,
                    Transport, Workload, config_to_dict, is_minimal,
                    min_config, nc_upper, validate, validate_configs)
from .simulator import Measurement, profile

logger = logging.getLogger(__name__)

H_INIT = 0.01

# NCCL's stock resource choice; NT is a plain default.
NCCL_DEFAULT_NC = 8
NCCL_DEFAULT_NT = 512
NCCL_DEFAULT_C = 2 * MIB


class _AlreadyOptimal:
    def __repr__(self):
        return "ALREADY_OPTIMAL"


ALREADY_OPTIMAL = _AlreadyOptimal()


class DoneReason(str, enum.Enum):
    CROSSED = "crossed"          # X' < Y': the overlap became compute-bound
    REGRESSION = "regression"    # x' > x: the comm itself got slower
    NO_GAIN = "no_gain"          # x' == x: zero gain, H undefined
    SATURATED = "saturated"      # every resource already at its cap
    COMPUTE_BOUND = "compute_bound"  # X <= Y on the initial probe


def compute_H(Y, Y_new, x_old, x_new):
    """Compute-time cost per unit of communication time saved.

    Returns :data:`ALREADY_OPTIMAL` when the step saved nothing.
    """
    if x_old <= x_new:
        return ALREADY_OPTIMAL
    return (Y_new - Y) / (x_old - x_new)


def _round_half_up(v):
    return int(math.floor(v + 0.5))


def scale_resources(cfg: CommConfig, op: CommOp, gpu: GpuSpec,
                    factor: float) -> CommConfig:
    """Scale NC, NT and C by ``factor`` onto their grids, within bounds."""
    nc = min(nc_upper(op, gpu),
             max(NC_MIN, _round_half_up(cfg.num_channels * factor)))
    target = cfg.num_threads * factor
    nt = next((v for v in NT_LADDER if v >= target), NT_MAX)
    c = CHUNK_GRANULARITY * _round_half_up(cfg.chunk_size * factor
                                           / CHUNK_GRANULARITY)
    c = min(op.bounds.c_max, max(op.bounds.c_min, c))
    return cfg.with_resources(nc, nt, c)


def grow(cfg: CommConfig, op: CommOp, gpu: GpuSpec, lr: float) -> CommConfig:
    """Scale NC, NT and C by ``1 + lr``, at least one discrete step each."""
    scaled = scale_resources(cfg, op, gpu, 1.0 + max(lr, 0.0))
    nc = min(nc_upper(op, gpu),
             max(cfg.num_channels + 1, scaled.num_channels))
    nt = max(scaled.num_threads,
             next((v for v in NT_LADDER if v > cfg.num_threads), NT_MAX))
    c = min(op.bounds.c_max,
            max(cfg.chunk_size + CHUNK_GRANULARITY, scaled.chunk_size))
    return cfg.with_resources(nc, nt, c)


@dataclass
class CommTuneState:
    index: int
    op: CommOp
    gpu: GpuSpec
    subspace: tuple
    config: Optional[CommConfig] = None      # accepted s_j
    x: Optional[float] = None                # measured time of ``config``
    candidate: Optional[CommConfig] = None   # next s'_j to profile
    H: float = H_INIT
    done: bool = False
    reason: Optional[DoneReason] = None
    # (config, makespan): lowest makespan observed for this comm while the
    # other comms hold their current configs.
    best_seen: Optional[tuple] = None
    history: list = field(default_factory=list)

    @property
    def initialized(self):
        return self.config is not None

    def rebase(self, Z):
        """The joint state changed; only the accepted config is comparable."""
        self.best_seen = (self.config, Z)

    def observe(self, cfg, meas):
        self.history.append((cfg, meas.x[self.index], meas.X, meas.Y, meas.Z))
        if self.best_seen is None or meas.Z < self.best_seen[1]:
            self.best_seen = (cfg, meas.Z)


@dataclass
class StepResult:
    done: bool
    config: CommConfig
    reason: Optional[DoneReason] = None
    lr: Optional[float] = None


def compute_bound(X, Y, Z=None, rel_tol=1e-9):
    """``X < Y`` with the compute stream finishing last.

    Without comm dependencies ``Z == max(X, Y)`` and this is plain
    ``X < Y``; a comm held back by ``ready_after`` can still end after the
    compute stream, in which case the overlap is not compute-bound.
    """
    return X < Y and (Z is None or Z <= Y * (1 + rel_tol))


def step_resource(state: CommTuneState, x_new=None, X_new=None, Y_new=None,
                  Z_new=None, Z_ref=None, stop_on_crossing=True) -> StepResult:
    """Decide what happens after ``state.candidate`` was profiled.

    An uninitialized state yields the minimum-resource candidate and needs
    no measurement. Otherwise:

    * ``x_new > state.x``: done, fall back to the lowest-makespan config seen.
    * compute-bound (``X_new < Y_new``, compute finishing last): done.
      The candidate is kept unless its makespan
      ``Z_new`` is worse than ``Z_ref``, the makespan of the accepted config.
    * else: grow the candidate by ``lr = (x_prev - x_new) / x_new``.
    """
    if not state.initialized:
        return StepResult(False, min_config(state.op, state.gpu, state.subspace))
    cand = state.candidate
    if x_new > state.x:
        best = state.best_seen[0] if state.best_seen else state.config
        return StepResult(True, best, DoneReason.REGRESSION)
    if stop_on_crossing and compute_bound(X_new, Y_new, Z_new):
        keep = Z_ref is None or Z_new is None or Z_new <= Z_ref
        return StepResult(True, cand if keep else state.config,
                          DoneReason.CROSSED)
    lr = (state.x - x_new) / x_new
    return StepResult(False, grow(cand, state.op, state.gpu, lr), lr=lr)


def select_subspace(op: CommOp, gpu: GpuSpec, params) -> tuple:
    """Subspace with the lowest standalone time at minimum resources."""
    best = None
    for key in params.keys():
        x = commperf.comm_time(op, min_config(op, gpu, key), gpu, params)
        if best is None or x < best[0]:
            best = (x, key)
    return best[1]


def nccl_default_config(op: CommOp, gpu: GpuSpec, subspace) -> CommConfig:
    base = min_config(op, gpu, subspace)
    c = min(max(NCCL_DEFAULT_C, op.bounds.c_min), op.bounds.c_max)
    return base.with_resources(min(NCCL_DEFAULT_NC, nc_upper(op, gpu)),
                               NCCL_DEFAULT_NT, c)


REFINE_STEPS = 4


def interpolate(lo: CommConfig, hi: CommConfig, t: float, op: CommOp,
                gpu: GpuSpec) -> CommConfig:
    """Geometric interpolation of the resources of two configs."""
    def geo(a, b):
        return a * (b / a) ** t
    nc = min(nc_upper(op, gpu),
             max(NC_MIN, _round_half_up(geo(lo.num_channels, hi.num_channels))))
    target = geo(lo.num_threads, hi.num_threads)
    nt = next((v for v in NT_LADDER if v >= target - 1e-9), NT_MAX)
    c = CHUNK_GRANULARITY * _round_half_up(
        geo(lo.chunk_size, hi.chunk_size) / CHUNK_GRANULARITY)
    c = min(op.bounds.c_max, max(op.bounds.c_min, c))
    return lo.with_resources(nc, nt, c)


def _refine_crossing(state, lo_m, hi_m, joint, measure, can_measure):
    """Bisect between the accepted config (``X >= Y``) and the candidate
    that crossed into ``X < Y``; return the lowest-makespan point seen."""
    lo_cfg, hi_cfg = state.config, state.candidate
    lo_t, hi_t = 0.0, 1.0
    best = min([(lo_m.Z, 0, lo_cfg, lo_m), (hi_m.Z, 1, hi_cfg, hi_m)],
               key=lambda b: (b[0], b[1]))
    for k in range(REFINE_STEPS):
        t = 0.5 * (lo_t + hi_t)
        cfg = interpolate(state.config, state.candidate, t, state.op,
                          state.gpu)
        if cfg in (lo_cfg, hi_cfg) or not can_measure():
            break
        trial = list(joint)
        trial[state.index] = cfg
        m = measure(tuple(trial), state.op.id, "refine")
        state.observe(cfg, m)
        if m.Z < best[0]:
            best = (m.Z, 2 + k, cfg, m)
        if compute_bound(m.X, m.Y, m.Z):
            hi_t, hi_cfg = t, cfg
        else:
            lo_t, lo_cfg = t, cfg
    return best[2], best[3]


class SimulatorProfiler:
    """Profiles joint configurations by simulation; counts calls."""

    def __init__(self, workload: Workload, params=None):
        self.workload = workload
        self.params = params if params is not None else commperf.SubspaceParams.default()
        self.calls = 0

    def __call__(self, configs) -> Measurement:
        self.calls += 1
        return profile(self.workload, configs, self.params)


@dataclass
class TuneResult:
    configs: tuple
    measurement: Optional[Measurement]
    initial_configs: tuple
    initial_measurement: Optional[Measurement]
    profile_calls: int
    log: list
    states: list
    budget_exhausted: bool = False
    reverted_to_initial: bool = False
    crossing_effects: list = field(default_factory=list)

    @property
    def makespan(self):
        return None if self.measurement is None else self.measurement.Z

    def boundary_condition(self):
        return check_boundary(self)


def _h_repr(h):
    return h if isinstance(h, float) or isinstance(h, int) else str(h)


def _config_key(configs):
    return tuple(configs)


def tune(workload: Workload, params=None, start="min", profiler=None,
         budget: int = 1000) -> TuneResult:
    """Run the priority-guided search.

    ``start`` is ``"min"`` (all comms uninitialized, seeded at minimum
    resources), ``"nccl-default"`` (NC=8, NT=512, C=2 MiB) or an explicit
    sequence of configs. With ``"nccl-default"`` the stock config is the
    reference: the search runs from minima first and, only if it ends
    worse than the reference, once more from the reference. ``profiler`` maps a joint config tuple to a
    :class:`~lagom.simulator.Measurement`; the simulator is used by default.
    """
    validate(workload)
    if params is None:
        params = commperf.SubspaceParams.default()
    if profiler is None:
        profiler = SimulatorProfiler(workload, params)
    gpu = workload.gpu
    N = workload.N
    if N == 0:
        return TuneResult((), None, (), None, 0, [], [])

    states = []
    for j, op in enumerate(workload.comm_ops):
        if isinstance(start, str):
            sub = select_subspace(op, gpu, params)
        else:
            sub = start[j].subspace
        states.append(CommTuneState(j, op, gpu, sub))

    minima = tuple(step_resource(s).config for s in states)
    if start == "min":
        initial = seed = minima
    elif start == "nccl-default":
        # The stock configuration is the reference point; the search itself
        # still begins at minimum resources.
        initial = tuple(nccl_default_config(s.op, gpu, s.subspace)
                        for s in states)
        seed = minima
    elif isinstance(start, str):
        raise ValueError(f"unknown start mode {start!r}")
    else:
        initial = seed = validate_configs(workload, start)

    log = []
    cache = {}
    calls = 0

    def measure(configs, comm_id, phase):
        nonlocal calls
        key = _config_key(configs)
        if key in cache:
            return cache[key]
        calls += 1
        m = profiler(configs)
        cache[key] = m
        log.append({
            "iter": calls,
            "comm_id": comm_id,
            "candidate": ([config_to_dict(c) for c in configs] if comm_id is None
                          else config_to_dict(configs[workload.comm_index(comm_id)])),
            "x_j": (list(m.x) if comm_id is None
                    else m.x[workload.comm_index(comm_id)]),
            "X": m.X, "Y": m.Y, "Z": m.Z,
            "phase": phase,
            "H_table": {s.op.id: _h_repr(s.H) for s in states if not s.done},
        })
        return m

    def current():
        return tuple(s.config for s in states)

    exhausted = False
    crossing_effects = []
    m_init = measure(initial, None, "init")
    m0 = measure(seed, None, "init")
    baseline = m0
    for s, cfg in zip(states, seed):
        s.config = cfg
        s.x = m0.x[s.index]
        s.observe(cfg, m0)
        if compute_bound(m0.X, m0.Y, m0.Z):
            s.done, s.reason = True, DoneReason.COMPUTE_BOUND
        else:
            s.candidate = grow(cfg, s.op, gpu, 0.0)

    while True:
        pending = [s for s in states if not s.done]
        if not pending:
            break
        s = min(pending, key=lambda st: (st.H, st.index))
        if s.candidate is None or s.candidate == s.config:
            s.done, s.reason = True, DoneReason.SATURATED
            continue
        if calls >= budget:
            exhausted = True
            break
        joint = list(current())
        joint[s.index] = s.candidate
        joint = tuple(joint)
        m = measure(joint, s.op.id, "step")
        s.observe(s.candidate, m)
        x_new = m.x[s.index]
        step = step_resource(s, x_new, m.X, m.Y, m.Z, baseline.Z)
        if step.done:
            adopted, adopted_m = step.config, None
            if step.reason is DoneReason.CROSSED:
                if compute_bound(baseline.X, baseline.Y, baseline.Z):
                    # Already compute-bound before this step: keep s_j.
                    adopted = s.config
                else:
                    crossing_effects.append(abs(s.x - x_new)
                                            + abs(m.Y - baseline.Y))
                    adopted, adopted_m = _refine_crossing(
                        s, baseline, m, current(), measure,
                        lambda: calls < budget)
            s.done, s.reason = True, step.reason
            if adopted == s.candidate:
                adopted_m = m
            s.config = adopted
            if adopted_m is None:
                adopted_m = cache.get(_config_key(current()))
            if adopted_m is None and calls < budget:
                adopted_m = measure(current(), s.op.id, "adopt")
            if adopted_m is not None:
                s.x, baseline = adopted_m.x[s.index], adopted_m
            for st in states:
                st.rebase(baseline.Z)
            s.candidate = None
            logger.debug("comm %s done (%s)", s.op.id, s.reason.value)
            continue
        h = compute_H(baseline.Y, m.Y, s.x, x_new)
        if h is ALREADY_OPTIMAL:
            s.done, s.reason, s.candidate = True, DoneReason.NO_GAIN, None
            continue
        s.H = h
        s.config, s.x, baseline = s.candidate, x_new, m
        s.candidate = step.config
        for st in states:
            st.rebase(baseline.Z)

    final = current()
    key = _config_key(final)
    if key in cache:
        final_m = cache[key]
    elif calls < budget:
        final_m = measure(final, None, "final")
    else:
        # Out of budget: fall back to the best joint point measured so far.
        final, final_m = min(cache.items(), key=lambda kv: kv[1].Z)
        exhausted = True
    reverted = False
    if final_m.Z > m_init.Z:
        if start == "nccl-default" and calls < budget:
            # The stock config beat the search from minima: search again
            # from the stock config itself.
            seeded = tune(workload, params, start=initial, profiler=profiler,
                          budget=budget - calls)
            log += [dict(rec, iter=rec["iter"] + calls) for rec in seeded.log]
            return TuneResult(
                seeded.configs, seeded.measurement, initial, m_init,
                calls + seeded.profile_calls, log, seeded.states,
                budget_exhausted=exhausted or seeded.budget_exhausted,
                reverted_to_initial=seeded.reverted_to_initial,
                crossing_effects=seeded.crossing_effects)
        final, final_m, reverted = initial, m_init, True
    return TuneResult(tuple(final), final_m, initial, m_init, calls, log, states,
                      budget_exhausted=exhausted, reverted_to_initial=reverted,
                      crossing_effects=crossing_effects)


def check_boundary(result: TuneResult, rel_tol=1e-9) -> Optional[int]:
    """Which terminal condition the final state satisfies (1, 2, 3) or None.

    1. every comm at minimum resources and ``X <= Y``;
    2. the comm stream finishes last (``X > Y``, or a dependency-delayed
       comm ends after the compute stream) and every comm stopped at its
       own optimum (time regressed, zero gain, or resources saturated);
    3. a step crossed into ``X' < Y'`` and the final gap between the comm
       stream's end and ``Y`` lies within that step's effect
       ``|dx| + |dY|``. The comm stream ends at ``X`` unless dependencies
       left it idle.
    """
    if not result.states:
        return 1
    m = result.measurement
    ops = [s.op for s in result.states]
    if all(is_minimal(c, op) for c, op in zip(result.configs, ops)) \
            and m.X <= m.Y * (1 + rel_tol):
        return 1
    if result.reverted_to_initial:
        # the stop reasons and crossings describe configs that were dropped
        return None
    own_optimum = {DoneReason.REGRESSION, DoneReason.NO_GAIN,
                   DoneReason.SATURATED}
    comm_bound = m.X > m.Y or m.Z > m.Y * (1 + rel_tol)
    if comm_bound and all(s.reason in own_optimum for s in result.states):
        return 2
    comm_end = m.X if m.comm_end is None else m.comm_end
    gap = abs(comm_end - m.Y)
    if result.crossing_effects and gap <= max(result.crossing_effects) * (1 + rel_tol):
        return 3
    return None


def log_lines(result: TuneResult) -> str:
    """The iteration log as JSON lines."""
    return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in result.log)
