import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from lagom.commperf import (SubspaceCoeffs, SubspaceParams, comm_time,
                            mem_footprint, nt_efficiency, parse_subspace_key,
                            subspace_key)
from lagom.errors import UnknownSubspaceError
from lagom.model import (KIB, MIB, NT_LADDER, Algorithm, Collective, CommOp,
                         GpuSpec, Protocol, Transport, nc_upper)
from lagom.workloads import DEFAULT_GPU, gen_ffn_allreduce

from conftest import RING_SIMPLE_P2P, cfg, make_params

GPU = GpuSpec(num_sms=64, peak_mem_bw=1000.0, link_bw=1000.0)
OP = CommOp("m", Collective.ALL_GATHER, 1_000_000)


def test_comm_time_chunked():
    # 5 chunks, eff_bw 400
    assert comm_time(OP, cfg(nc=4, c=50_000), GPU, make_params()) == 2515.0


def test_comm_time_link_plateau():
    p = make_params()
    x16 = comm_time(OP, cfg(nc=16, c=50_000), GPU, p)
    x32 = comm_time(OP, cfg(nc=32, c=50_000), GPU, p)
    # transfer term capped at m / link_bw = 1000
    assert x16 == 10 + math.ceil(1_000_000 / (16 * 50_000)) + 1000.0
    assert x32 - math.ceil(1_000_000 / (32 * 50_000)) == 1010.0
    assert x16 - 2 == x32 - 1


def test_comm_time_single_chunk():
    assert comm_time(OP, cfg(nc=4, c=1_000_000), GPU, make_params()) == 2511.0


def test_channel_setup_term():
    p = make_params(per_channel_setup=1.5)
    assert comm_time(OP, cfg(nc=4, c=1_000_000), GPU, p) == 2511.0 + 6.0


def test_all_reduce_doubles_traffic():
    op = CommOp("ar", Collective.ALL_REDUCE, 1_000_000)
    # m=2e6: 10 + 10 chunks + 5000 transfer
    assert comm_time(op, cfg(nc=4, c=50_000), GPU, make_params()) == 5020.0


def test_unknown_subspace():
    other = (Algorithm.TREE, Protocol.LL, Transport.NET)
    with pytest.raises(UnknownSubspaceError) as exc:
        comm_time(OP, cfg(subspace=other), GPU, make_params())
    assert exc.value.code == "UNKNOWN_SUBSPACE"
    assert "TREE/LL/NET" in str(exc.value)


def test_footprint_examples():
    p = make_params(mem_coeff=0.5, chunk_knee=50_000)
    assert mem_footprint(cfg(nc=4, c=50_000), GPU, p) == 100.0
    zero = make_params(mem_coeff=0.0)
    assert mem_footprint(cfg(nc=31, c=4 * MIB), GPU, zero) == 0.0
    assert mem_footprint(cfg(nc=63, c=4 * MIB), GPU, make_params(mem_coeff=100)) == 600.0


def test_nt_efficiency():
    coeffs = SubspaceCoeffs(1, 1, 1, 0, 1, 50_000, nt_floor=0.85)
    assert nt_efficiency(640, coeffs) == 1.0
    assert nt_efficiency(64, coeffs) == pytest.approx(0.865, rel=1e-12)


def test_subspace_key_round_trip():
    for key in SubspaceParams.default().keys():
        assert parse_subspace_key(subspace_key(key)) == key
    assert subspace_key(RING_SIMPLE_P2P) == "RING/SIMPLE/P2P"


def test_default_table_covers_all_subspaces(params):
    assert len(params.keys()) == len(Algorithm) * len(Protocol) * len(Transport)


def test_params_file_round_trip(tmp_path, params):
    path = tmp_path / "p.json"
    path.write_text(json.dumps(params.to_dict()))
    assert SubspaceParams.load(path) == params


def test_params_env_override(tmp_path, monkeypatch):
    p = make_params()
    path = tmp_path / "p.json"
    path.write_text(json.dumps(p.to_dict()))
    monkeypatch.setenv("LAGOM_PARAMS", str(path))
    assert SubspaceParams.default() == p


# Shape properties on the default table and GPU.

def _ffn_op():
    return gen_ffn_allreduce().comm_ops[0]


@pytest.mark.parametrize("key", SubspaceParams.default().keys())
def test_x_over_nc_shape(key, params):
    op = _ffn_op()
    coeffs = params[key]
    xs = [comm_time(op, cfg(nc=n, nt=128, c=256 * KIB, subspace=key),
                    DEFAULT_GPU, params)
          for n in range(1, nc_upper(op, DEFAULT_GPU) + 1)]
    eta = nt_efficiency(128, coeffs)
    uncapped = [n for n in range(1, len(xs) + 1)
                if n * coeffs.per_channel_bw * eta < DEFAULT_GPU.link_bw]
    # steps between uncapped channel counts only ever gain
    below = xs[:len(uncapped)]
    assert all(b <= a for a, b in zip(below, below[1:]))
    # once capped, only the setup and chunk terms move
    capped = xs[len(uncapped):]
    for n, (a, b) in enumerate(zip(capped, capped[1:]), start=len(uncapped) + 1):
        assert b - a <= coeffs.per_channel_setup + 1e-9


@pytest.mark.parametrize("key", SubspaceParams.default().keys())
def test_x_over_c_non_increasing(key, params):
    op = _ffn_op()
    cs = range(64 * KIB, 4 * MIB + 1, 64 * KIB)
    xs = [comm_time(op, cfg(nc=4, nt=128, c=c, subspace=key), DEFAULT_GPU,
                    params) for c in cs]
    assert all(b <= a for a, b in zip(xs, xs[1:]))
    c = params[key]
    m = params.effective_bytes(op)
    limit = (c.base_latency + c.per_channel_setup * 4 + c.per_chunk_overhead
             + m / min(4 * c.per_channel_bw * nt_efficiency(128, c),
                       DEFAULT_GPU.link_bw))
    assert xs[-1] >= limit


@settings(max_examples=200, deadline=None)
@given(nc=st.integers(1, 32), c=st.integers(64, 4096),
       key=st.sampled_from(SubspaceParams.default().keys()))
def test_footprint_bounds_and_monotonicity(nc, c, key):
    params = SubspaceParams.default()
    v = mem_footprint(cfg(nc, 64, c * KIB, key), DEFAULT_GPU, params)
    assert 0 <= v < DEFAULT_GPU.peak_mem_bw
    if nc < 32:
        assert mem_footprint(cfg(nc + 1, 64, c * KIB, key), DEFAULT_GPU, params) >= v
    if c < 4096:
        assert mem_footprint(cfg(nc, 64, (c + 1) * KIB, key), DEFAULT_GPU, params) >= v


@settings(max_examples=200, deadline=None)
@given(nc=st.integers(1, 32), c=st.integers(64, 4096),
       nt1=st.sampled_from(NT_LADDER), nt2=st.sampled_from(NT_LADDER),
       key=st.sampled_from(SubspaceParams.default().keys()),
       m=st.integers(1, 256 * MIB))
def test_nt_effect_is_bounded(nc, c, nt1, nt2, key, m):
    params = SubspaceParams.default()
    op = CommOp("m", Collective.REDUCE_SCATTER, m)
    a = cfg(nc, nt1, c * KIB, key)
    b = cfg(nc, nt2, c * KIB, key)
    eta0 = 0.85
    assert params[key].nt_floor == eta0
    xa = comm_time(op, a, DEFAULT_GPU, params)
    xb = comm_time(op, b, DEFAULT_GPU, params)
    assert abs(xa - xb) / min(xa, xb) <= (1 - eta0) / eta0 + 1e-12
    assert mem_footprint(a, DEFAULT_GPU, params) == mem_footprint(b, DEFAULT_GPU, params)
