"""Command line: ``strainlimit {run,sweep-n,sweep-m,mms,check-props}``.

Every command is a function of (config, seed, input files); nothing written
depends on the clock or the locale.  Exit status 0 on success, 1 on a solver
abort, I/O failure or failed property, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import experiments as X
from .config import ConfigError, RunConfig, parse_config
from .solver import SolverAbort

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

# check-props needs no physical run; these keys only satisfy the parser
PROPS_DEFAULT_DOC = "dim = 2\nm = 2\na = 1\nalpha = 1\nn = 16\nT_final = 0\ndt = 1\n"


def _write(path: str, data: bytes) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)


def _say(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg)


def _table_bytes(cols, rows) -> bytes:
    return X.csv_bytes([tuple(float(v) if not isinstance(v, int) else v for v in r) for r in rows], cols)


# ---------------------------------------------------------------------------
# commands


def cmd_run(cfg: RunConfig, quiet: bool = False, restart: str | None = None) -> int:
    out = cfg.out_dir
    ckdir = os.path.join(out, "checkpoints") if cfg.checkpoint_every else None
    res = X.run_config(cfg, checkpoint_dir=ckdir, restart=restart)
    _write(os.path.join(out, "diagnostics.csv"), X.csv_bytes(res.records))
    X.write_final(os.path.join(out, "final.slvf"), res.state)
    last = res.records[-1]
    _say(quiet, f"t={X.format_float(last.t)} total={X.format_float(last.total)} "
                f"max_strain={X.format_float(last.max_strain)} substeps={res.substeps} retries={res.retries}")
    return EXIT_OK


def cmd_sweep_n(cfg: RunConfig, n_list, quiet: bool = False) -> int:
    res = X.sweep_n(cfg, n_list)
    for n in res.n_list:
        _write(os.path.join(cfg.out_dir, f"n_{n}", "diagnostics.csv"), X.csv_bytes(res.runs[n].records))
    cols, rows = res.table()
    _write(os.path.join(cfg.out_dir, "sweep_n.csv"), _table_bytes(cols, rows))
    C, worst = res.reg_fit()
    _say(quiet, "T L1(Q) differences: " + " ".join(X.format_float(v) for v in res.T_L1_diff))
    _say(quiet, f"regulariser fit C={X.format_float(C)} worst ratio={X.format_float(worst)}")
    for k, v in res.apriori_spread().items():
        _say(quiet, f"spread {k}: {X.format_float(v)}")
    return EXIT_OK


def cmd_sweep_m(cfg: RunConfig, m_list, quiet: bool = False) -> int:
    res = X.sweep_m(cfg, m_list)
    for m in res.m_list:
        _write(os.path.join(cfg.out_dir, f"m_{m}", "diagnostics.csv"), X.csv_bytes(res.runs[m].records))
    cols, rows = res.table()
    _write(os.path.join(cfg.out_dir, "sweep_m.csv"), _table_bytes(cols, rows))
    _say(quiet, "u differences: " + " ".join(X.format_float(v) for v in res.u_diff))
    return EXIT_OK


def cmd_mms(cfg: RunConfig, quiet: bool = False) -> int:
    X.check_manufactured(cfg)
    tr = X.mms_temporal(cfg)
    rows = list(zip(tr.dts, tr.err_u, tr.err_v))
    _write(os.path.join(cfg.out_dir, "mms_temporal.csv"), X.csv_bytes(rows, ("dt", "err_u_L2Q", "err_v_L2Q")))
    ms, eu, ev = X.mms_spatial(cfg)
    _write(os.path.join(cfg.out_dir, "mms_spatial.csv"),
           X.csv_bytes(list(zip(ms, eu, ev)), ("m", "err_u_L2Q", "err_v_L2Q")))
    _say(quiet, f"temporal order u={X.format_float(tr.order_u)} v={X.format_float(tr.order_v)}")
    for m, e in zip(ms, eu):
        _say(quiet, f"m={m} error floor {X.format_float(e)}")
    return EXIT_OK


def cmd_check_props(cfg: RunConfig, quiet: bool = False) -> int:
    results = X.property_suite(cfg.seed, cfg.props_samples, cfg.props_a)
    for r in results:
        _say(quiet, r.line())
    report = "".join(r.line() + "\n" for r in results).encode("ascii")
    _write(os.path.join(cfg.out_dir, "properties.txt"), report)
    return EXIT_OK if all(r.passed for r in results if r.fatal) else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument handling


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration (key = value lines)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides out_dir)")
    common.add_argument("--seed", type=int, help="seed (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")
    ap = argparse.ArgumentParser(prog="strainlimit", description="Strain-limiting viscoelastic solver")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="single run")
    p.add_argument("--restart", metavar="PATH", help="continue from a checkpoint file")
    p = sub.add_parser("sweep-n", parents=[common], help="regularisation sweep")
    p.add_argument("--n-list", type=_int_list, help="comma separated n values (overrides n_list)")
    p = sub.add_parser("sweep-m", parents=[common], help="Galerkin degree sweep")
    p.add_argument("--m-list", type=_int_list, help="comma separated m values (overrides m_list)")
    sub.add_parser("mms", parents=[common], help="manufactured-solution convergence")
    p = sub.add_parser("check-props", parents=[common], help="constitutive property suite")
    p.add_argument("--samples", type=int, help="sample count (overrides props_samples)")
    return ap


def load_config(args) -> RunConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    elif args.command == "check-props":
        cfg = parse_config(PROPS_DEFAULT_DOC)
    else:
        raise ConfigError(f"{args.command} needs --config")
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if getattr(args, "samples", None) is not None:
        if args.samples < 1:
            raise ConfigError("--samples must be >= 1")
        cfg = replace(cfg, props_samples=args.samples)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"strainlimit: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            return cmd_run(cfg, args.quiet, args.restart)
        if args.command == "sweep-n":
            return cmd_sweep_n(cfg, args.n_list or cfg.n_list, args.quiet)
        if args.command == "sweep-m":
            return cmd_sweep_m(cfg, args.m_list or cfg.m_list, args.quiet)
        if args.command == "mms":
            return cmd_mms(cfg, args.quiet)
        return cmd_check_props(cfg, args.quiet)
    except SolverAbort as exc:
        print(f"strainlimit: solver abort: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"strainlimit: I/O failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"strainlimit: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
