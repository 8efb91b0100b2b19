"""Input coercion for the estimator and CLI entry points."""

from __future__ import annotations

import json
import os
from pathlib import Path

from .commperf import SubspaceParams
from .errors import InvalidWorkloadError
from .model import (Workload, configs_from_dict, validate, validate_configs,
                    workload_from_dict)


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def check_workload(workload) -> Workload:
    """Accept a Workload, a workload document, or a path to one."""
    if isinstance(workload, Workload):
        return validate(workload)
    if isinstance(workload, (str, os.PathLike)):
        workload = _load_json(Path(workload))
    if isinstance(workload, dict):
        return workload_from_dict(workload)
    raise InvalidWorkloadError("workload",
                               f"cannot build a workload from {type(workload).__name__}")


def check_params(params) -> SubspaceParams:
    if params is None:
        return SubspaceParams.default()
    if isinstance(params, SubspaceParams):
        return params
    if isinstance(params, (str, os.PathLike)):
        return SubspaceParams.load(Path(params))
    if isinstance(params, dict):
        return SubspaceParams.from_dict(params)
    raise InvalidWorkloadError("params",
                               f"cannot build params from {type(params).__name__}")


def check_configs(workload: Workload, configs) -> tuple:
    """Accept a config sequence or a configs document keyed by comm id."""
    if isinstance(configs, (str, os.PathLike)):
        configs = _load_json(Path(configs))
    if isinstance(configs, dict):
        return configs_from_dict(configs, workload)
    return validate_configs(workload, configs)
