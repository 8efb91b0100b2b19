"""Synthetic communication cost model.

Each (algorithm, protocol, transport) subspace carries a small set of
coefficients. Within a subspace the execution time of a collective is

    x = alpha + zeta * NC + chunks * c_over + m / eff_bw
    chunks = ceil(m / (NC * C))
    eff_bw = min(NC * b_chan * eta(NT), link_bw)
    eta(NT) = eta0 + (1 - eta0) * NT / 640

and the global-memory bandwidth it draws while in flight is

    V = min(phi * peak_mem_bw, kappa * NC * C / (C + C_knee) * b_chan)
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

from .errors import InvalidWorkloadError, UnknownSubspaceError
from .model import (KIB, NT_MAX, Algorithm, Collective, CommConfig, CommOp,
                    GpuSpec, Protocol, Transport)

PARAMS_ENV = "LAGOM_PARAMS"

DEFAULT_COLLECTIVE_FACTORS = {
    Collective.ALL_REDUCE: 2.0,
    Collective.ALL_GATHER: 1.0,
    Collective.REDUCE_SCATTER: 1.0,
    Collective.ALL_TO_ALL: 1.0,
}


@dataclass(frozen=True)
class SubspaceCoeffs:
    base_latency: float
    per_channel_bw: float
    per_chunk_overhead: float
    per_channel_setup: float
    mem_coeff: float
    chunk_knee: float
    nt_floor: float = 0.85

    def check(self, path):
        if min(self.base_latency, self.per_chunk_overhead,
               self.per_channel_setup, self.mem_coeff) < 0:
            raise InvalidWorkloadError(path, "coefficients must be >= 0")
        if self.per_channel_bw <= 0:
            raise InvalidWorkloadError(f"{path}.per_channel_bw", "must be > 0")
        if not 0 < self.nt_floor <= 1:
            raise InvalidWorkloadError(f"{path}.nt_floor",
                                       "must lie in (0, 1]")
        if self.chunk_knee < KIB:
            raise InvalidWorkloadError(f"{path}.chunk_knee",
                                       "must be >= 1 KiB")
        return self


def subspace_key(subspace) -> str:
    a, p, t = subspace
    return f"{Algorithm(a).value}/{Protocol(p).value}/{Transport(t).value}"


def parse_subspace_key(key: str):
    try:
        a, p, t = key.split("/")
        return (Algorithm(a), Protocol(p), Transport(t))
    except ValueError:
        raise InvalidWorkloadError(
            f"subspaces.{key}", "expected ALGORITHM/PROTOCOL/TRANSPORT") from None


class SubspaceParams:
    """Coefficient table keyed by (algorithm, protocol, transport)."""

    def __init__(self, subspaces, collective_factors=None):
        self.subspaces = {}
        for key, coeffs in subspaces.items():
            if isinstance(key, str):
                key = parse_subspace_key(key)
            self.subspaces[tuple(key)] = coeffs
        if not self.subspaces:
            raise InvalidWorkloadError("subspaces", "at least one subspace")
        factors = dict(DEFAULT_COLLECTIVE_FACTORS)
        factors.update({Collective(k): float(v)
                        for k, v in (collective_factors or {}).items()})
        self.collective_factors = factors

    def __getitem__(self, subspace):
        try:
            return self.subspaces[tuple(subspace)]
        except KeyError:
            raise UnknownSubspaceError(subspace_key(subspace)) from None

    def __contains__(self, subspace):
        return tuple(subspace) in self.subspaces

    def __eq__(self, other):
        return (isinstance(other, SubspaceParams)
                and self.subspaces == other.subspaces
                and self.collective_factors == other.collective_factors)

    def keys(self):
        return sorted(self.subspaces, key=subspace_key)

    def effective_bytes(self, op: CommOp) -> float:
        return op.message_bytes * self.collective_factors[op.collective]

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict) or not isinstance(doc.get("subspaces"),
                                                       dict):
            raise InvalidWorkloadError("subspaces", "missing subspace table")
        subspaces = {}
        for key, c in doc["subspaces"].items():
            path = f"subspaces.{key}"
            if not isinstance(c, dict):
                raise InvalidWorkloadError(path, "expected an object")
            try:
                coeffs = SubspaceCoeffs(**c)
            except TypeError as exc:
                raise InvalidWorkloadError(path, str(exc)) from None
            subspaces[parse_subspace_key(key)] = coeffs.check(path)
        factors = doc.get("collective_factors", {})
        try:
            return cls(subspaces, factors)
        except ValueError as exc:
            raise InvalidWorkloadError("collective_factors", str(exc)) from None

    def to_dict(self):
        return {
            "units": {"base_latency": "us", "per_channel_bw": "bytes/us",
                      "per_chunk_overhead": "us", "per_channel_setup": "us",
                      "chunk_knee": "bytes"},
            "collective_factors": {k.value: v for k, v in
                                   self.collective_factors.items()},
            "subspaces": {subspace_key(k): asdict(self.subspaces[k])
                          for k in self.keys()},
        }

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls):
        """Shipped coefficients, or the file named by ``$LAGOM_PARAMS``."""
        override = os.environ.get(PARAMS_ENV)
        if override:
            return cls.load(Path(override))
        text = resources.files("lagom").joinpath(
            "data/default_params.json").read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))


def nt_efficiency(num_threads: int, coeffs: SubspaceCoeffs) -> float:
    eta0 = coeffs.nt_floor
    return eta0 + (1.0 - eta0) * num_threads / NT_MAX


def effective_bandwidth(cfg: CommConfig, gpu: GpuSpec,
                        coeffs: SubspaceCoeffs) -> float:
    eta = nt_efficiency(cfg.num_threads, coeffs)
    return min(cfg.num_channels * coeffs.per_channel_bw * eta, gpu.link_bw)


def comm_time(op: CommOp, cfg: CommConfig, gpu: GpuSpec,
              params: SubspaceParams) -> float:
    """Standalone execution time of ``op`` under ``cfg`` in microseconds."""
    c = params[cfg.subspace]
    m = params.effective_bytes(op)
    chunks = math.ceil(m / (cfg.num_channels * cfg.chunk_size))
    return (c.base_latency + c.per_channel_setup * cfg.num_channels
            + chunks * c.per_chunk_overhead
            + m / effective_bandwidth(cfg, gpu, c))


def mem_footprint(cfg: CommConfig, gpu: GpuSpec,
                  params: SubspaceParams) -> float:
    """Global-memory bandwidth drawn by an in-flight communication."""
    c = params[cfg.subspace]
    demand = (c.mem_coeff * cfg.num_channels
              * (cfg.chunk_size / (cfg.chunk_size + c.chunk_knee))
              * c.per_channel_bw)
    return min(gpu.comm_bw_cap_fraction * gpu.peak_mem_bw, demand)
