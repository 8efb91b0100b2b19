"""Ground-truth baselines: exhaustive joint search and the sequential tuner."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

from . import commperf
from .errors import GridTooLargeError
from .model import KIB, Workload, config_to_dict, nc_upper, validate
from .simulator import profile
from .tuner import (CommTuneState, SimulatorProfiler, grow, select_subspace,
                    step_resource)

DEFAULT_NC_GRID = (1, 2, 4, 8, 16)
DEFAULT_C_GRID = (64 * KIB, 256 * KIB, 1024 * KIB, 2048 * KIB)
DEFAULT_NT = 128
DEFAULT_LIMIT = 1_000_000


@dataclass
class OracleResult:
    configs: tuple
    makespan: float
    evaluations: int
    wall_time: float = 0.0

    def to_dict(self, workload: Workload):
        return {
            "configs": {op.id: config_to_dict(c)
                        for op, c in zip(workload.comm_ops, self.configs)},
            "Z": self.makespan,
            "evaluations": self.evaluations,
            "wall_time_s": self.wall_time,
        }


def default_grid(workload: Workload, params=None, nc_values=DEFAULT_NC_GRID,
                 c_values=DEFAULT_C_GRID, nt=DEFAULT_NT):
    """Per-comm NC x C grids inside each comm's bounds, NT fixed.

    The subspace is the one :func:`select_subspace` picks for the tuner.
    """
    if params is None:
        params = commperf.SubspaceParams.default()
    gpu = workload.gpu
    grids = []
    for op in workload.comm_ops:
        sub = select_subspace(op, gpu, params)
        base = step_resource(CommTuneState(0, op, gpu, sub)).config
        ncs = sorted({v for v in nc_values if 1 <= v <= nc_upper(op, gpu)})
        cs = sorted({v for v in c_values
                     if op.bounds.c_min <= v <= op.bounds.c_max})
        grids.append([base.with_resources(nc, nt, c)
                      for nc in ncs for c in cs])
    return grids


def _evaluate(workload, params, joint):
    return profile(workload, joint, params).Z


def exhaustive(workload: Workload, grids=None, params=None,
               limit: int = DEFAULT_LIMIT, n_jobs=None) -> OracleResult:
    """Simulate every joint assignment and return the minimum makespan.

    Ties go to the lexicographically smallest joint configuration. With
    ``n_jobs`` the points are evaluated through joblib; the reduction runs
    over the enumeration order, so the result does not depend on it.
    """
    validate(workload)
    if params is None:
        params = commperf.SubspaceParams.default()
    if grids is None:
        grids = default_grid(workload, params)
    size = math.prod(len(g) for g in grids)
    if size > limit:
        raise GridTooLargeError(size, limit)
    t0 = time.perf_counter()
    points = list(itertools.product(*grids))
    if n_jobs is None or n_jobs == 1:
        zs = [_evaluate(workload, params, p) for p in points]
    else:
        from joblib import Parallel, delayed
        zs = Parallel(n_jobs=n_jobs)(
            delayed(_evaluate)(workload, params, p) for p in points)
    best = min(zip(zs, points),
               key=lambda zp: (zp[0], [c.sort_key() for c in zp[1]]))
    return OracleResult(tuple(best[1]), best[0], len(points),
                        time.perf_counter() - t0)


def sequential_naive(workload: Workload, params=None) -> OracleResult:
    """Tune comms one at a time, in list order, to their own minimum time.

    Each comm grows from minimum resources with the same step rule as the
    priority tuner but ignores compute time; the config with the lowest
    measured communication time is frozen before moving on.
    """
    validate(workload)
    if params is None:
        params = commperf.SubspaceParams.default()
    gpu = workload.gpu
    t0 = time.perf_counter()
    if workload.N == 0:
        return OracleResult((), profile(workload, (), params).Z, 0, 0.0)
    profiler = SimulatorProfiler(workload, params)
    states = [CommTuneState(j, op, gpu, select_subspace(op, gpu, params))
              for j, op in enumerate(workload.comm_ops)]
    configs = [step_resource(s).config for s in states]
    m = profiler(tuple(configs))
    for s in states:
        s.config, s.x = configs[s.index], m.x[s.index]
        s.observe(s.config, m)
        s.candidate = grow(s.config, s.op, gpu, 0.0)
        while s.candidate != s.config:
            trial = list(configs)
            trial[s.index] = s.candidate
            m = profiler(tuple(trial))
            x_new = m.x[s.index]
            step = step_resource(s, x_new, m.X, m.Y, m.Z,
                                 stop_on_crossing=False)
            if step.done or x_new == s.x:
                break
            s.config, s.x, s.candidate = s.candidate, x_new, step.config
        configs[s.index] = s.config
    final = tuple(configs)
    z = profiler(final).Z
    return OracleResult(final, z, profiler.calls, time.perf_counter() - t0)
