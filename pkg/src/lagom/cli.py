"""Command-line entry point: ``lagom {simulate,tune,oracle,compare,sweep,gen}``.

Exit codes: 0 ok, 2 validation error, 3 I/O error, 4 tuning budget
exhausted, 5 oracle grid too large.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import re
import sys

from . import __version__, oracle, tuner, workloads
from ._validation import check_configs, check_params
from .commperf import SubspaceParams
from .errors import GridTooLargeError, InvalidWorkloadError, LagomError
from .model import (KIB, MIB, NT_LADDER, config_to_dict, dumps_workload,
                    min_config, nc_upper, workload_from_dict)
from .simulator import simulate, write_trace

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_BUDGET = 4
EXIT_GRID = 5

log = logging.getLogger("lagom")


class CLIError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _read(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot read {path}: {exc.strerror}") from None


def _parse_json(path):
    raw = _read(path)
    try:
        return json.loads(raw.decode("utf-8")), raw
    except UnicodeDecodeError:
        raise CLIError(EXIT_VALIDATION, f"{path}: not UTF-8") from None
    except json.JSONDecodeError as exc:
        raise CLIError(EXIT_VALIDATION,
                       f"{path}: malformed JSON at line {exc.lineno} "
                       f"column {exc.colno}: {exc.msg}") from None


def _digest(raw: bytes):
    return "sha256:" + hashlib.sha256(raw).hexdigest()


def _load_inputs(args, need_configs=False):
    doc, raw = _parse_json(args.workload)
    digests = {"workload": _digest(raw)}
    w = workload_from_dict(doc)
    if args.params:
        pdoc, praw = _parse_json(args.params)
        params = check_params(pdoc)
        digests["params"] = _digest(praw)
    else:
        params = SubspaceParams.default()
        digests["params"] = _digest(
            json.dumps(params.to_dict(), sort_keys=True).encode())
    configs = None
    if getattr(args, "configs", None):
        cdoc, craw = _parse_json(args.configs)
        configs = check_configs(w, cdoc)
        digests["configs"] = _digest(craw)
    elif need_configs:
        raise CLIError(EXIT_VALIDATION, "--configs is required")
    return w, params, configs, digests


def _emit(text, out=None):
    if out:
        try:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise CLIError(EXIT_IO, f"cannot write {out}: {exc.strerror}") from None
    else:
        sys.stdout.write(text)


def _report(digests, body):
    return json.dumps({"tool": "lagom", "version": __version__,
                       "inputs": digests, **body}, indent=2, sort_keys=True) + "\n"


def _size(token):
    """Parse ``64K``/``2M``/``4096`` into bytes (K and M are binary)."""
    m = re.fullmatch(r"\s*(\d+)\s*([KkMm]?)(i?[Bb])?\s*", token)
    if not m:
        raise CLIError(EXIT_VALIDATION, f"bad size {token!r}")
    mult = {"": 1, "k": KIB, "m": MIB}[m.group(2).lower()]
    return int(m.group(1)) * mult


def _values(spec, as_size=False):
    """Comma list of values or ``lo-hi[:step]`` ranges."""
    conv = _size if as_size else _int
    out = []
    for part in (p for p in spec.split(",") if p.strip()):
        r = re.fullmatch(r"\s*([^-:]+)-([^-:]+)(?::([^-:]+))?\s*", part)
        if r:
            lo, hi = conv(r.group(1)), conv(r.group(2))
            step = conv(r.group(3)) if r.group(3) else 1
            if step < 1 or hi < lo:
                raise CLIError(EXIT_VALIDATION, f"bad range {part!r}")
            out.extend(range(lo, hi + 1, step))
        else:
            out.append(conv(part))
    return out


def _int(token):
    try:
        return int(token)
    except ValueError:
        raise CLIError(EXIT_VALIDATION, f"not an integer: {token!r}") from None


def _parse_grid(spec):
    """``nc=1,2,4;c=64K,1M;nt=128`` -> dict of value lists."""
    grid = {"nc": list(oracle.DEFAULT_NC_GRID),
            "c": list(oracle.DEFAULT_C_GRID), "nt": [oracle.DEFAULT_NT]}
    if not spec:
        return grid
    for item in spec.split(";"):
        if not item.strip():
            continue
        key, _, val = item.partition("=")
        key = key.strip().lower()
        if key not in grid:
            raise CLIError(EXIT_VALIDATION, f"unknown grid key {key!r}")
        grid[key] = _values(val, as_size=(key == "c"))
    return grid


def _grids(w, params, spec, limit):
    g = _parse_grid(spec)
    per_comm = []
    for op in w.comm_ops:
        ncs = [v for v in g["nc"] if 1 <= v <= nc_upper(op, w.gpu)]
        cs = [v for v in g["c"] if op.bounds.c_min <= v <= op.bounds.c_max
              and v % KIB == 0]
        nts = [v for v in g["nt"] if v in NT_LADDER]
        per_comm.append(len(set(ncs)) * len(set(cs)) * len(set(nts)))
    size = 1
    for n in per_comm:
        size *= n
    if size > limit:
        raise GridTooLargeError(size, limit)
    grids = []
    for nt in g["nt"]:
        for i, cg in enumerate(oracle.default_grid(w, params, g["nc"], g["c"], nt)):
            if len(grids) <= i:
                grids.append([])
            grids[i].extend(cg)
    return [sorted(set(cg), key=lambda c: c.sort_key()) for cg in grids]


# -- commands --------------------------------------------------------------

def cmd_simulate(args):
    w, params, configs, digests = _load_inputs(args, need_configs=True)
    r = simulate(w, configs, params)
    if args.trace:
        try:
            write_trace(args.trace, r, waves=args.waves)
        except OSError as exc:
            raise CLIError(EXIT_IO, f"cannot write {args.trace}: {exc.strerror}") from None
    body = {
        "X": r.total_comm, "Y": r.total_compute, "Z": r.makespan,
        "comm": {op.id: x for op, x in zip(w.comm_ops, r.comm_times)},
        "compute": {op.id: y for op, y in zip(w.compute_ops, r.comp_times)},
    }
    _emit(_report(digests, body), args.out)
    return EXIT_OK


def _measurement_dict(m):
    if m is None:
        return None
    return {"X": m.X, "Y": m.Y, "Z": m.Z, "x": list(m.x), "comm_end": m.comm_end}


def cmd_tune(args):
    if args.budget < 1:
        raise CLIError(EXIT_VALIDATION, "--budget must be >= 1")
    w, params, _, digests = _load_inputs(args)
    res = tuner.tune(w, params, start=args.start, budget=args.budget)
    if args.log:
        _emit(tuner.log_lines(res), args.log)
    body = {
        "start": args.start,
        "budget": args.budget,
        "configs": {op.id: config_to_dict(c)
                    for op, c in zip(w.comm_ops, res.configs)},
        "final": _measurement_dict(res.measurement),
        "initial": _measurement_dict(res.initial_measurement),
        "profile_calls": res.profile_calls,
        "budget_exhausted": res.budget_exhausted,
        "reverted_to_initial": res.reverted_to_initial,
        "boundary_condition": tuner.check_boundary(res),
        "done_reasons": {s.op.id: (s.reason.value if s.reason else None)
                         for s in res.states},
    }
    _emit(_report(digests, body), args.out)
    return EXIT_BUDGET if res.budget_exhausted else EXIT_OK


def cmd_oracle(args):
    w, params, _, digests = _load_inputs(args)
    grids = _grids(w, params, args.grid, args.limit)
    res = oracle.exhaustive(w, grids, params, args.limit, args.jobs)
    _emit(_report(digests, res.to_dict(w)), args.out)
    return EXIT_OK


def cmd_compare(args):
    w, params, _, _ = _load_inputs(args)
    grids = _grids(w, params, args.grid, args.limit)
    ex = oracle.exhaustive(w, grids, params, args.limit, args.jobs)
    tu = tuner.tune(w, params, budget=args.budget)
    nv = oracle.sequential_naive(w, params)
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["method", "Z", "evaluations"])
    out.writerow(["exhaustive", repr(ex.makespan), ex.evaluations])
    out.writerow(["lagom", repr(tu.makespan if tu.makespan is not None else ex.makespan),
                  tu.profile_calls])
    out.writerow(["sequential_naive", repr(nv.makespan), nv.evaluations])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _sweep_base(op, gpu, params):
    """NC=4, NT=128, C=c_min in the comm's selected subspace."""
    cfg = min_config(op, gpu, tuner.select_subspace(op, gpu, params))
    return cfg.with_resources(min(4, nc_upper(op, gpu)), 128, op.bounds.c_min)


def cmd_sweep(args):
    w, params, configs, _ = _load_inputs(args)
    try:
        j = w.comm_index(args.comm)
    except KeyError:
        raise CLIError(EXIT_VALIDATION, f"no comm op {args.comm!r}") from None
    if configs is None:
        configs = tuple(_sweep_base(op, w.gpu, params) for op in w.comm_ops)
    values = _values(args.values, as_size=(args.param == "c"))
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["value", "x_comm", "Y", "Z"])
    for v in values:
        base = configs[j]
        cfg = base.with_resources(
            v if args.param == "nc" else base.num_channels,
            v if args.param == "nt" else base.num_threads,
            v if args.param == "c" else base.chunk_size)
        trial = list(configs)
        trial[j] = cfg
        r = simulate(w, trial, params)
        out.writerow([v, repr(r.comm_times[j]), repr(r.total_compute),
                      repr(r.makespan)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_gen(args):
    kind = args.kind
    if kind in ("fsdp", "tp", "ep"):
        w = workloads.GENERATORS[kind](args.layers, args.seed)
    elif kind == "random":
        w = workloads.gen_random(args.M, args.N, args.seed, deps=args.deps)
    elif kind == "replicated":
        w = workloads.gen_replicated(args.N)
    else:
        w = workloads.GENERATORS[kind]()
    _emit(dumps_workload(w) + "\n", args.out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="lagom", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"lagom {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--workload", required=True)
        sp.add_argument("--params", help="subspace params JSON "
                        "(default: $LAGOM_PARAMS or the shipped table)")
        sp.add_argument("--out", help="write the report here instead of stdout")

    sp = sub.add_parser("simulate", help="simulate one joint configuration")
    common(sp)
    sp.add_argument("--configs", required=True)
    sp.add_argument("--trace", help="write a Chrome trace JSON here")
    sp.add_argument("--waves", action="store_true",
                    help="add per-wave events to the trace")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("tune", help="run the priority-guided tuner")
    common(sp)
    sp.add_argument("--start", choices=["min", "nccl-default"], default="min")
    sp.add_argument("--budget", type=int, default=1000)
    sp.add_argument("--log", help="iteration log (JSON lines)")
    sp.set_defaults(func=cmd_tune)

    for name, fn, hlp in (("oracle", cmd_oracle, "exhaustive joint grid search"),
                          ("compare", cmd_compare, "tuner vs naive vs exhaustive")):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--grid", default="",
                        help="e.g. 'nc=1,2,4,8,16;c=64K,256K,1M,2M;nt=128'")
        sp.add_argument("--limit", type=int, default=oracle.DEFAULT_LIMIT)
        sp.add_argument("--jobs", type=int, default=None)
        if name == "compare":
            sp.add_argument("--budget", type=int, default=1000)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("sweep", help="vary one resource of one comm")
    common(sp)
    sp.add_argument("--comm", required=True)
    sp.add_argument("--param", choices=["nc", "c", "nt"], required=True)
    sp.add_argument("--values", required=True,
                    help="comma list or lo-hi[:step]; sizes accept K/M")
    sp.add_argument("--configs", help="base configs (default NC=4, NT=128, C=c_min)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gen", help="write a generated workload")
    sp.add_argument("kind", choices=sorted(workloads.GENERATORS))
    sp.add_argument("--layers", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--M", type=int, default=4)
    sp.add_argument("--N", type=int, default=2)
    sp.add_argument("--deps", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except GridTooLargeError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_GRID
    except InvalidWorkloadError as exc:
        print(json.dumps({"error": exc.code, "path": exc.path,
                          "message": exc.message}), file=sys.stderr)
        return EXIT_VALIDATION
    except LagomError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
