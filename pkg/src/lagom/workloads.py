"""Seeded generators for overlap patterns found in distributed training.

All generators share :data:`DEFAULT_GPU` and draw from the fixed ranges
below, so a (generator, arguments) pair always yields the same workload.
"""

from __future__ import annotations

import random

from .model import (KIB, MIB, Collective, CommOp, ComputeOp, GpuSpec,
                    Workload, validate)

DEFAULT_GPU = GpuSpec(
    num_sms=64,
    peak_mem_bw=600_000.0,   # 600 GB/s
    link_bw=120_000.0,       # 120 GB/s aggregate interconnect
    comm_bw_cap_fraction=0.6,
    compute_on_comm_slowdown=0.0,
)

# Ranges for seeded draws (inclusive).
BLOCKS_RANGE = (256, 2048)
BLOCKS_PER_SM = (1, 2, 4)
BYTES_PER_BLOCK_RANGE = (32 * KIB, 160 * KIB)
WAVE_TIME_RANGE = (10.0, 60.0)
MESSAGE_RANGE = (4 * MIB, 48 * MIB)


def _compute(rng, op_id, scale=1.0):
    return ComputeOp(
        id=op_id,
        total_blocks=max(1, int(rng.randint(*BLOCKS_RANGE) * scale)),
        blocks_per_sm=rng.choice(BLOCKS_PER_SM),
        bytes_per_block=float(rng.randint(*BYTES_PER_BLOCK_RANGE)),
        base_wave_time=round(rng.uniform(*WAVE_TIME_RANGE), 3),
    )


def _message(rng, lo=MESSAGE_RANGE[0], hi=MESSAGE_RANGE[1]):
    return rng.randint(lo // KIB, hi // KIB) * KIB


def gen_fsdp(layers: int, seed: int = 0, gpu: GpuSpec = DEFAULT_GPU) -> Workload:
    """Per layer: AllGather, layer compute, ReduceScatter.

    Both collectives of layer ``k`` wait for layer ``k-1``'s compute: the
    AllGather prefetches layer ``k``'s parameters and the ReduceScatter
    reduces the gradients the previous layer produced.
    """
    if layers < 1:
        raise ValueError("layers must be >= 1")
    rng = random.Random(seed)
    comps, comms = [], []
    for k in range(layers):
        prev = comps[-1].id if comps else None
        comms.append(CommOp(f"ag{k}", Collective.ALL_GATHER, _message(rng),
                            ready_after=prev))
        comps.append(_compute(rng, f"layer{k}"))
        comms.append(CommOp(f"rs{k}", Collective.REDUCE_SCATTER, _message(rng),
                            ready_after=prev))
    return validate(Workload(gpu, comps, comms))


def gen_tp_domino(layers: int, seed: int = 0,
                  gpu: GpuSpec = DEFAULT_GPU) -> Workload:
    """Two micro-batches per layer; each micro-batch's AllReduce hides
    behind the other micro-batch's compute."""
    if layers < 1:
        raise ValueError("layers must be >= 1")
    rng = random.Random(seed)
    comps, comms = [], []
    for k in range(layers):
        for b in (0, 1):
            comps.append(_compute(rng, f"l{k}_mb{b}", scale=0.5))
            comms.append(CommOp(f"ar{k}_mb{b}", Collective.ALL_REDUCE,
                                _message(rng, 2 * MIB, 24 * MIB),
                                ready_after=comps[-1].id))
    return validate(Workload(gpu, comps, comms))


def gen_ep_dualbatch(layers: int, seed: int = 0,
                     gpu: GpuSpec = DEFAULT_GPU) -> Workload:
    """Dual-batch expert parallelism: attention and expert compute of two
    micro-batches interleave with their dispatch/combine AlltoAlls."""
    if layers < 1:
        raise ValueError("layers must be >= 1")
    rng = random.Random(seed)
    comps, comms = [], []
    for k in range(layers):
        attn = [_compute(rng, f"l{k}_attn{b}", scale=0.5) for b in (0, 1)]
        expert = [_compute(rng, f"l{k}_expert{b}", scale=0.5) for b in (0, 1)]
        comps += attn + expert
        for b in (0, 1):
            comms.append(CommOp(f"l{k}_dispatch{b}", Collective.ALL_TO_ALL,
                                _message(rng, 2 * MIB, 16 * MIB),
                                ready_after=attn[b].id))
        for b in (0, 1):
            comms.append(CommOp(f"l{k}_combine{b}", Collective.ALL_TO_ALL,
                                _message(rng, 2 * MIB, 16 * MIB),
                                ready_after=expert[b].id))
    return validate(Workload(gpu, comps, comms))


def gen_fig4_scenario(gpu: GpuSpec = DEFAULT_GPU) -> Workload:
    """Two AllReduces overlapping seven MatMuls.

    AllReduce A is small and latency-bound, AllReduce B is large and
    bandwidth-bound, so extra channels buy B far more communication time
    per unit of compute slowdown than A.
    """
    comps = [ComputeOp(f"matmul{i}", total_blocks=512 + 128 * (i % 3),
                       blocks_per_sm=2, bytes_per_block=96.0 * KIB,
                       base_wave_time=30.0)
             for i in range(7)]
    comms = [CommOp("allreduce_a", Collective.ALL_REDUCE, 1 * MIB),
             CommOp("allreduce_b", Collective.ALL_REDUCE, 48 * MIB)]
    return validate(Workload(gpu, comps, comms))


def gen_ffn_allreduce(message_bytes: int = 32 * MIB,
                      gpu: GpuSpec = DEFAULT_GPU) -> Workload:
    """One FFN kernel fully covered by one AllReduce (NC/C sweep setup)."""
    comps = [ComputeOp("ffn", total_blocks=1024, blocks_per_sm=2,
                       bytes_per_block=128.0 * KIB, base_wave_time=20.0)]
    comms = [CommOp("allreduce", Collective.ALL_REDUCE, message_bytes)]
    return validate(Workload(gpu, comps, comms))


def gen_replicated(n: int, message_bytes: int = 32 * MIB,
                   gpu: GpuSpec = DEFAULT_GPU) -> Workload:
    """``n`` identical (compute, AllReduce) pairs, communication-bound."""
    if n < 1:
        raise ValueError("n must be >= 1")
    comps = [ComputeOp(f"comp{k}", total_blocks=256, blocks_per_sm=2,
                       bytes_per_block=64.0 * KIB, base_wave_time=20.0)
             for k in range(n)]
    comms = [CommOp(f"ar{k}", Collective.ALL_REDUCE, message_bytes)
             for k in range(n)]
    return validate(Workload(gpu, comps, comms))


def gen_random(M: int, N: int, seed: int = 0, deps: bool = False,
               gpu: GpuSpec = DEFAULT_GPU) -> Workload:
    """Random compute and comm ops; comms get ``ready_after`` links only
    when ``deps`` is set."""
    if M < 0 or N < 0 or M + N < 1:
        raise ValueError("need M, N >= 0 and M + N >= 1")
    rng = random.Random(seed)
    comps = [_compute(rng, f"c{i}") for i in range(M)]
    comms = []
    for j in range(N):
        collective = rng.choice(list(Collective))
        ready = None
        if deps and comps and rng.random() < 0.5:
            ready = rng.choice(comps).id
        comms.append(CommOp(f"m{j}", collective, _message(rng),
                            ready_after=ready))
    return validate(Workload(gpu, comps, comms))


GENERATORS = {
    "fsdp": gen_fsdp,
    "tp": gen_tp_domino,
    "ep": gen_ep_dualbatch,
    "fig4": gen_fig4_scenario,
    "ffn": gen_ffn_allreduce,
    "replicated": gen_replicated,
    "random": gen_random,
}
