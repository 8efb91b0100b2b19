"""Domain types shared by the cost model, simulator, tuner and oracle.

Units are fixed throughout: time in microseconds, sizes in bytes and
bandwidth in bytes per microsecond.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from .errors import InvalidWorkloadError

KIB = 1024
MIB = 1024 * KIB

NT_LADDER = tuple(range(64, 641, 64))
NT_MIN = NT_LADDER[0]
NT_MAX = NT_LADDER[-1]
NC_MIN = 1
CHUNK_GRANULARITY = KIB

UNITS = {"time": "us", "size": "bytes", "bandwidth": "bytes/us"}


class Algorithm(str, enum.Enum):
    RING = "RING"
    TREE = "TREE"


class Protocol(str, enum.Enum):
    SIMPLE = "SIMPLE"
    LL = "LL"
    LL128 = "LL128"


class Transport(str, enum.Enum):
    P2P = "P2P"
    SHM = "SHM"
    NET = "NET"


class Collective(str, enum.Enum):
    ALL_REDUCE = "ALL_REDUCE"
    ALL_GATHER = "ALL_GATHER"
    REDUCE_SCATTER = "REDUCE_SCATTER"
    ALL_TO_ALL = "ALL_TO_ALL"


@dataclass(frozen=True)
class GpuSpec:
    num_sms: int
    peak_mem_bw: float
    link_bw: float
    comm_bw_cap_fraction: float = 0.6
    compute_on_comm_slowdown: float = 0.0
    # False switches off SM stealing: compute always sees all SMs.
    comm_occupies_sms: bool = True


@dataclass(frozen=True)
class ComputeOp:
    id: str
    total_blocks: int
    blocks_per_sm: int
    bytes_per_block: float
    base_wave_time: float


@dataclass(frozen=True)
class CommBounds:
    nc_max: int = 32
    c_min: int = 64 * KIB
    c_max: int = 4 * MIB


@dataclass(frozen=True)
class CommOp:
    id: str
    collective: Collective
    message_bytes: int
    ready_after: Optional[str] = None
    bounds: CommBounds = field(default_factory=CommBounds)


@dataclass(frozen=True, order=True)
class CommConfig:
    algorithm: Algorithm
    protocol: Protocol
    transport: Transport
    num_channels: int
    num_threads: int
    chunk_size: int

    @property
    def subspace(self):
        return (self.algorithm, self.protocol, self.transport)

    def sort_key(self):
        return (self.algorithm.value, self.protocol.value, self.transport.value,
                self.num_channels, self.num_threads, self.chunk_size)

    def with_resources(self, num_channels, num_threads, chunk_size):
        return replace(self, num_channels=num_channels,
                       num_threads=num_threads, chunk_size=chunk_size)


@dataclass(frozen=True)
class Workload:
    gpu: GpuSpec
    compute_ops: tuple = ()
    comm_ops: tuple = ()

    def __post_init__(self):
        # Accept lists for convenience; store tuples so the value is hashable.
        object.__setattr__(self, "compute_ops", tuple(self.compute_ops))
        object.__setattr__(self, "comm_ops", tuple(self.comm_ops))

    @property
    def M(self):
        return len(self.compute_ops)

    @property
    def N(self):
        return len(self.comm_ops)

    def comm_index(self, comm_id):
        for j, op in enumerate(self.comm_ops):
            if op.id == comm_id:
                return j
        raise KeyError(comm_id)


@dataclass(frozen=True)
class TimelineEntry:
    stream: str
    op_id: str
    start: float
    duration: float


@dataclass(frozen=True)
class WaveRecord:
    op_id: str
    start: float
    duration: float
    blocks: int
    comm_id: Optional[str]


@dataclass
class SimResult:
    comp_times: list
    comm_times: list
    total_compute: float
    total_comm: float
    makespan: float
    timeline: list
    waves: list = field(default_factory=list)

    @property
    def X(self):
        return self.total_comm

    @property
    def Y(self):
        return self.total_compute

    @property
    def Z(self):
        return self.makespan


# -- resource bounds -------------------------------------------------------

def nc_upper(op: CommOp, gpu: GpuSpec) -> int:
    """Largest admissible channel count: keeps at least one SM for compute."""
    return min(op.bounds.nc_max, gpu.num_sms - 1)


def min_config(op: CommOp, gpu: GpuSpec, subspace) -> CommConfig:
    a, p, t = subspace
    return CommConfig(Algorithm(a), Protocol(p), Transport(t),
                      NC_MIN, NT_MIN, op.bounds.c_min)


def is_minimal(cfg: CommConfig, op: CommOp) -> bool:
    return (cfg.num_channels == NC_MIN and cfg.num_threads == NT_MIN
            and cfg.chunk_size == op.bounds.c_min)


# -- validation ------------------------------------------------------------

def _require(cond, path, message):
    if not cond:
        raise InvalidWorkloadError(path, message)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)
            and math.isfinite(v))


def validate_gpu(gpu: GpuSpec, path="gpu"):
    _require(_is_int(gpu.num_sms) and gpu.num_sms >= 2, f"{path}.num_sms",
             "num_sms must be an integer >= 2")
    _require(_is_num(gpu.peak_mem_bw) and gpu.peak_mem_bw > 0,
             f"{path}.peak_mem_bw", "must be > 0")
    _require(_is_num(gpu.link_bw) and gpu.link_bw > 0, f"{path}.link_bw",
             "must be > 0")
    _require(_is_num(gpu.comm_bw_cap_fraction)
             and 0 < gpu.comm_bw_cap_fraction < 1,
             f"{path}.comm_bw_cap_fraction", "must lie in (0, 1)")
    _require(_is_num(gpu.compute_on_comm_slowdown)
             and gpu.compute_on_comm_slowdown >= 0,
             f"{path}.compute_on_comm_slowdown", "must be >= 0")
    return gpu


def validate_config(cfg: CommConfig, op: CommOp, gpu: GpuSpec, path="config"):
    _require(isinstance(cfg.algorithm, Algorithm), f"{path}.algorithm",
             "unknown algorithm")
    _require(isinstance(cfg.protocol, Protocol), f"{path}.protocol",
             "unknown protocol")
    _require(isinstance(cfg.transport, Transport), f"{path}.transport",
             "unknown transport")
    hi = nc_upper(op, gpu)
    _require(_is_int(cfg.num_channels) and NC_MIN <= cfg.num_channels <= hi,
             f"{path}.num_channels", f"must lie in [{NC_MIN}, {hi}]")
    _require(cfg.num_threads in NT_LADDER, f"{path}.num_threads",
             f"must be one of {list(NT_LADDER)}")
    b = op.bounds
    _require(_is_int(cfg.chunk_size) and b.c_min <= cfg.chunk_size <= b.c_max,
             f"{path}.chunk_size", f"must lie in [{b.c_min}, {b.c_max}]")
    _require(cfg.chunk_size % CHUNK_GRANULARITY == 0, f"{path}.chunk_size",
             "must be a multiple of 1 KiB")
    return cfg


def validate_configs(workload: Workload, configs):
    configs = tuple(configs)
    _require(len(configs) == workload.N, "configs",
             f"expected {workload.N} configs, got {len(configs)}")
    for j, (cfg, op) in enumerate(zip(configs, workload.comm_ops)):
        validate_config(cfg, op, workload.gpu, f"configs[{j}]")
    return configs


def validate(workload: Workload) -> Workload:
    """Return ``workload`` unchanged if every invariant holds.

    Raises :class:`InvalidWorkloadError` naming the first violated field.
    """
    _require(isinstance(workload, Workload), "workload", "not a Workload")
    validate_gpu(workload.gpu)
    _require(workload.M + workload.N >= 1, "workload",
             "needs at least one compute or comm op")
    seen = set()
    for i, op in enumerate(workload.compute_ops):
        p = f"compute_ops[{i}]"
        _require(isinstance(op.id, str) and op.id, f"{p}.id", "empty id")
        _require(op.id not in seen, f"{p}.id", f"duplicate id {op.id!r}")
        seen.add(op.id)
        _require(_is_int(op.total_blocks) and op.total_blocks >= 1,
                 f"{p}.total_blocks", "must be an integer >= 1")
        _require(_is_int(op.blocks_per_sm) and op.blocks_per_sm >= 1,
                 f"{p}.blocks_per_sm", "must be an integer >= 1")
        _require(_is_num(op.bytes_per_block) and op.bytes_per_block >= 0,
                 f"{p}.bytes_per_block", "must be >= 0")
        _require(_is_num(op.base_wave_time) and op.base_wave_time >= 0,
                 f"{p}.base_wave_time", "must be >= 0")
    compute_ids = set(seen)
    for j, op in enumerate(workload.comm_ops):
        p = f"comm_ops[{j}]"
        _require(isinstance(op.id, str) and op.id, f"{p}.id", "empty id")
        _require(op.id not in seen, f"{p}.id", f"duplicate id {op.id!r}")
        seen.add(op.id)
        _require(isinstance(op.collective, Collective), f"{p}.collective",
                 "unknown collective")
        _require(_is_int(op.message_bytes) and op.message_bytes >= 1,
                 f"{p}.message_bytes", "must be an integer >= 1")
        _require(op.ready_after is None or op.ready_after in compute_ids,
                 f"{p}.ready_after",
                 f"{op.ready_after!r} is not a compute op of this workload")
        b = op.bounds
        _require(_is_int(b.nc_max) and b.nc_max >= NC_MIN, f"{p}.bounds.nc_max",
                 "num_channels bound must be >= 1")
        _require(_is_int(b.c_min) and b.c_min >= CHUNK_GRANULARITY
                 and b.c_min % CHUNK_GRANULARITY == 0, f"{p}.bounds.c_min",
                 "must be a positive multiple of 1 KiB")
        _require(_is_int(b.c_max) and b.c_max >= b.c_min
                 and b.c_max % CHUNK_GRANULARITY == 0, f"{p}.bounds.c_max",
                 "must be a multiple of 1 KiB and >= c_min")
    return workload


# -- serialization -----------------------------------------------------------

def _enum(cls, value, path):
    try:
        return cls(value)
    except ValueError:
        raise InvalidWorkloadError(
            path, f"{value!r} is not one of {[m.value for m in cls]}") from None


def _take(doc, key, path, cls=dict):
    if not isinstance(doc, dict) or key not in doc:
        raise InvalidWorkloadError(f"{path}.{key}" if path else key,
                                   "missing field")
    v = doc[key]
    if cls is not None and not isinstance(v, cls):
        raise InvalidWorkloadError(f"{path}.{key}" if path else key,
                                   f"expected {cls.__name__}")
    return v


def _build(cls, doc, path, fields):
    if not isinstance(doc, dict):
        raise InvalidWorkloadError(path, "expected an object")
    unknown = set(doc) - set(fields)
    if unknown:
        raise InvalidWorkloadError(f"{path}.{sorted(unknown)[0]}",
                                   "unknown field")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise InvalidWorkloadError(path, str(exc)) from None


def gpu_from_dict(doc, path="gpu"):
    return _build(GpuSpec, doc, path, GpuSpec.__dataclass_fields__)


def workload_from_dict(doc) -> Workload:
    """Parse and validate a workload document."""
    if not isinstance(doc, dict):
        raise InvalidWorkloadError("$", "expected a JSON object")
    gpu = gpu_from_dict(_take(doc, "gpu", ""))
    comps = []
    for i, c in enumerate(_take(doc, "compute_ops", "", list)):
        comps.append(_build(ComputeOp, c, f"compute_ops[{i}]",
                            ComputeOp.__dataclass_fields__))
    comms = []
    for j, c in enumerate(_take(doc, "comm_ops", "", list)):
        p = f"comm_ops[{j}]"
        if not isinstance(c, dict):
            raise InvalidWorkloadError(p, "expected an object")
        c = dict(c)
        c["collective"] = _enum(Collective, _take(c, "collective", p, None),
                                f"{p}.collective")
        c["bounds"] = _build(CommBounds, c.get("bounds", {}), f"{p}.bounds",
                             CommBounds.__dataclass_fields__)
        comms.append(_build(CommOp, c, p, CommOp.__dataclass_fields__))
    return validate(Workload(gpu, comps, comms))


def workload_to_dict(workload: Workload) -> dict:
    comms = []
    for op in workload.comm_ops:
        d = asdict(op)
        d["collective"] = op.collective.value
        comms.append(d)
    return {
        "units": dict(UNITS),
        "gpu": asdict(workload.gpu),
        "compute_ops": [asdict(op) for op in workload.compute_ops],
        "comm_ops": comms,
    }


def config_to_dict(cfg: CommConfig) -> dict:
    return {
        "algorithm": cfg.algorithm.value,
        "protocol": cfg.protocol.value,
        "transport": cfg.transport.value,
        "num_channels": cfg.num_channels,
        "num_threads": cfg.num_threads,
        "chunk_size": cfg.chunk_size,
    }


def config_from_dict(doc, path="config") -> CommConfig:
    if not isinstance(doc, dict):
        raise InvalidWorkloadError(path, "expected an object")
    d = dict(doc)
    d["algorithm"] = _enum(Algorithm, _take(d, "algorithm", path, None),
                           f"{path}.algorithm")
    d["protocol"] = _enum(Protocol, _take(d, "protocol", path, None),
                          f"{path}.protocol")
    d["transport"] = _enum(Transport, _take(d, "transport", path, None),
                           f"{path}.transport")
    return _build(CommConfig, d, path, CommConfig.__dataclass_fields__)


def configs_to_dict(workload: Workload, configs) -> dict:
    return {
        "units": {"chunk_size": "bytes"},
        "configs": {op.id: config_to_dict(c)
                    for op, c in zip(workload.comm_ops, configs)},
    }


def configs_from_dict(doc, workload: Workload) -> tuple:
    """Parse a configs document keyed by comm id, ordered like the workload."""
    table = _take(doc, "configs", "")
    out = []
    for op in workload.comm_ops:
        if op.id not in table:
            raise InvalidWorkloadError(f"configs.{op.id}", "missing config")
        out.append(config_from_dict(table[op.id], f"configs.{op.id}"))
    extra = set(table) - {op.id for op in workload.comm_ops}
    if extra:
        raise InvalidWorkloadError(f"configs.{sorted(extra)[0]}",
                                   "no such comm op")
    return validate_configs(workload, out)


def dumps_workload(workload: Workload) -> str:
    return json.dumps(workload_to_dict(workload), indent=2)


def loads_workload(text: str) -> Workload:
    return workload_from_dict(json.loads(text))
