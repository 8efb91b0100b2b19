import pytest

from lagom.commperf import SubspaceCoeffs, SubspaceParams
from lagom.model import (KIB, Algorithm, Collective, CommConfig, CommOp,
                         ComputeOp, GpuSpec, Protocol, Transport, Workload)

RING_SIMPLE_P2P = (Algorithm.RING, Protocol.SIMPLE, Transport.P2P)


def make_params(**overrides):
    """Single-subspace table with round-number coefficients."""
    coeffs = dict(base_latency=10.0, per_channel_bw=100.0,
                  per_chunk_overhead=1.0, per_channel_setup=0.0,
                  mem_coeff=0.5, chunk_knee=50_000, nt_floor=1.0)
    coeffs.update(overrides)
    return SubspaceParams({RING_SIMPLE_P2P: SubspaceCoeffs(**coeffs)})


def cfg(nc=1, nt=64, c=64 * KIB, subspace=RING_SIMPLE_P2P):
    a, p, t = subspace
    return CommConfig(a, p, t, nc, nt, c)


@pytest.fixture
def params():
    return SubspaceParams.default()


@pytest.fixture
def small_gpu():
    return GpuSpec(num_sms=10, peak_mem_bw=1000.0, link_bw=1000.0,
                   comm_bw_cap_fraction=0.6)


@pytest.fixture
def tiny_workload(small_gpu):
    comp = ComputeOp("c0", total_blocks=32, blocks_per_sm=2,
                     bytes_per_block=1000.0, base_wave_time=5.0)
    comm = CommOp("m0", Collective.ALL_GATHER, 1_000_000)
    return Workload(small_gpu, [comp], [comm])


ACCEPTANCE = {}


def record(number, ok, detail):
    """Note one acceptance criterion's outcome for the closing summary."""
    ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
