"""Estimator-style wrappers around the tuners.

``fit(workload)`` searches communication configs for a workload and stores
them as ``configs_``; ``predict`` simulates a workload with those configs
and ``score`` returns the negated makespan, so larger is better.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import oracle, tuner
from ._validation import check_params, check_workload
from .errors import InvalidWorkloadError
from .simulator import simulate


class _ConfigSearch(BaseEstimator):

    def _fit_workload(self, workload):
        self.workload_ = check_workload(workload)
        self.params_ = check_params(self.params)
        return self.workload_

    def predict(self, workload=None):
        """Simulate ``workload`` (default: the fitted one) with ``configs_``."""
        check_is_fitted(self, "configs_")
        w = self.workload_ if workload is None else check_workload(workload)
        if w.N != len(self.configs_):
            raise InvalidWorkloadError(
                "workload", f"fitted for {len(self.configs_)} comms, got {w.N}")
        return simulate(w, self.configs_, self.params_)

    def score(self, workload=None, y=None):
        return -self.predict(workload).makespan


class LagomTuner(_ConfigSearch):
    """Priority-guided resource tuner.

    Parameters
    ----------
    params : SubspaceParams, dict, path or None
        Communication cost coefficients; ``None`` uses the shipped table.
    start : {"min", "nccl-default"}
        Reference configuration measured first; the search begins at
        minimum resources either way.
    budget : int
        Maximum number of profiler calls.
    profiler : callable or None
        Maps a tuple of configs to a ``Measurement``. Defaults to simulation.
    """

    def __init__(self, params=None, start="min", budget=1000, profiler=None):
        self.params = params
        self.start = start
        self.budget = budget
        self.profiler = profiler

    def fit(self, workload, y=None):
        w = self._fit_workload(workload)
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        res = tuner.tune(w, self.params_, start=self.start,
                         profiler=self.profiler, budget=self.budget)
        self.result_ = res
        self.configs_ = res.configs
        self.makespan_ = res.makespan
        self.n_profile_calls_ = res.profile_calls
        self.boundary_condition_ = tuner.check_boundary(res)
        return self


class ExhaustiveTuner(_ConfigSearch):
    """Joint grid search over NC x C per comm (NT fixed)."""

    def __init__(self, params=None, nc_values=oracle.DEFAULT_NC_GRID,
                 c_values=oracle.DEFAULT_C_GRID, nt=oracle.DEFAULT_NT,
                 limit=oracle.DEFAULT_LIMIT, n_jobs=None):
        self.params = params
        self.nc_values = nc_values
        self.c_values = c_values
        self.nt = nt
        self.limit = limit
        self.n_jobs = n_jobs

    def fit(self, workload, y=None):
        w = self._fit_workload(workload)
        grids = oracle.default_grid(w, self.params_, self.nc_values,
                                    self.c_values, self.nt)
        res = oracle.exhaustive(w, grids, self.params_, self.limit,
                                self.n_jobs)
        self.result_ = res
        self.configs_ = res.configs
        self.makespan_ = res.makespan
        self.n_evaluations_ = res.evaluations
        return self


class SequentialTuner(_ConfigSearch):
    """Tunes comms one by one, in order, to their own fastest config."""

    def __init__(self, params=None):
        self.params = params

    def fit(self, workload, y=None):
        w = self._fit_workload(workload)
        res = oracle.sequential_naive(w, self.params_)
        self.result_ = res
        self.configs_ = res.configs
        self.makespan_ = res.makespan
        self.n_evaluations_ = res.evaluations
        return self
