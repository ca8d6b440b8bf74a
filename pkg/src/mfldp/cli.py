"""Command-line entry point ``mfldp``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 dimension cap exceeded.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as cfgmod
from . import ldp, pipeline
from .errors import ConfigError, MfldpError
from .fieldio import dumps, load_trajectory
from .lattice import Lattice

log = logging.getLogger("mfldp")


def parse_grid(text: str) -> list:
    """``"a,b,c"`` or ``"start:stop:num"`` (inclusive linspace)."""
    text = text.strip()
    if not text:
        raise ConfigError("empty grid")
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            values = np.linspace(float(start), float(stop), int(num)).tolist()
        else:
            values = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None
    if not values:
        raise ConfigError("empty grid")
    return values


def parse_int_list(text: str) -> list:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse integer list {text!r}") from None


def parse_params(text) -> dict:
    """Kind parameters as JSON object or ``key=value,key=value``."""
    if not text:
        return {}
    text = text.strip()
    if text.startswith("{"):
        try:
            out = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad parameter JSON: {exc}") from None
        if not isinstance(out, dict):
            raise ConfigError("parameters must be a JSON object")
        return out
    out = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"parameter {item!r} is not key=value")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"parameter {key.strip()!r} is not a number") from None
    return out


def _spec(kind, params):
    return {"kind": kind, **parse_params(params)}


# -- subcommands ----------------------------------------------------------------------


def cmd_hartree(args):
    lat = Lattice(args.d, args.L, args.M)
    v = cfgmod.build_potential(lat, _spec(args.v_kind, args.v_params))
    phi0 = cfgmod.build_phi0(lat, _spec(args.phi0_kind, args.phi0_params))
    out = pipeline.output_root(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"potential": _spec(args.v_kind, args.v_params), "phi0": _spec(args.phi0_kind, args.phi0_params)}
    traj = pipeline.stage_hartree(phi0, v, args.t, args.dt, out, meta, fmt_=args.format)
    print(f"hartree: {len(traj) - 1} steps, norm drift {traj.max_norm_drift:.3e}, "
          f"energy drift {traj.max_energy_drift:.3e}; trajectory in {out / 'trajectory'}")


def cmd_variance(args):
    traj, _ = load_trajectory(args.traj)
    O = cfgmod.build_observable(traj.lattice, _spec(args.O_kind, args.O_params))
    out = pipeline.output_root(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = pipeline.stage_variance(traj, O, out, args.samples, t=args.t)
    print(f"alpha_t^2 = {res['alpha2']:.17g} at t = {res['t']:.17g}")


def cmd_fock_verify(args):
    n_cut = args.N if args.n_cut is None else args.n_cut
    if n_cut > args.N:
        raise ConfigError("--n-cut must not exceed --N")
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    rep = pipeline.stage_fock(args.M, args.N, n_cut, args.seed, report_path)
    failed = [k for k, c in rep["checks"].items() if not c["passed"]]
    print(f"fock-verify: {len(rep['checks'])} checks, max identity residual "
          f"{rep['max_identity_residual']:.3e}, worst residual/tolerance "
          f"{rep['max_residual_over_tolerance']:.3e}, failed: {failed or 'none'}")
    return 0 if not failed else 3


def cmd_nbody_compare(args):
    traj, _ = load_trajectory(args.traj)
    O = cfgmod.build_observable(traj.lattice, _spec(args.O_kind, args.O_params))
    lams, xs = parse_grid(args.lambda_grid), parse_grid(args.x_grid)
    N_list = parse_int_list(args.N_list)
    stats = pipeline.nbody_statistics(traj, O, N_list, lams, xs, t=args.t, dim_cap=args.dim_cap)
    out = pipeline.output_root(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.stage_nbody(stats, lams, xs, out)
    for r in stats:
        print(f"N={r['N']}: Var/N = {r['var_over_N']:.10g}, alpha_t^2 = {r['alpha2']:.10g}")


def cmd_ldp_table(args):
    lam_max = np.inf if args.lambda_max is None else args.lambda_max
    try:
        p = ldp.LDPParams(args.alpha2, args.beta, lam_max)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    xs = parse_grid(args.x_grid)
    if any(x <= 0 for x in xs):
        raise ConfigError("x grid must be positive")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pipeline.stage_ldp(p, xs, args.N, out)
    print(f"ldp-table: {len(xs)} rows written to {out}")


def cmd_run(args):
    cfg = cfgmod.load(args.config)
    if args.seed is not None:
        cfg = cfgmod.from_dict({**cfg.as_dict(), "seed": args.seed})
    out = pipeline.run(cfg, args.out)
    print(f"run complete: {out}")


def cmd_validate(args):
    cfg = cfgmod.load(args.config)
    rep = cfgmod.validate(cfg)
    print(dumps(rep), end="")
    return 0 if rep["ok"] else 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfldp", description="Mean-field boson dynamics laboratory.")
    p.add_argument("--threads", type=int, default=None, help="cap on BLAS/FFT worker threads")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("hartree", help="evolve the Hartree equation and export the trajectory")
    s.add_argument("--d", type=int, default=1)
    s.add_argument("--L", type=float, default=2 * np.pi)
    s.add_argument("--M", type=int, default=64)
    s.add_argument("--dt", type=float, default=0.01)
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--v-kind", default="gaussian", choices=sorted(cfgmod.POTENTIALS))
    s.add_argument("--v-params", default="")
    s.add_argument("--phi0-kind", default="gaussian", choices=sorted(cfgmod.INITIAL_STATES))
    s.add_argument("--phi0-params", default="")
    s.add_argument("--format", default="bin", choices=["bin", "csv"])
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_hartree)

    s = sub.add_parser("variance", help="CLT variance from a stored trajectory")
    s.add_argument("--traj", required=True)
    s.add_argument("--O-kind", default="cosine", choices=sorted(cfgmod.OBSERVABLES))
    s.add_argument("--O-params", default="")
    s.add_argument("--t", type=float, default=None)
    s.add_argument("--samples", type=int, default=11)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_variance)

    s = sub.add_parser("fock-verify", help="operator identity battery on a truncated Fock space")
    s.add_argument("--M", type=int, default=2)
    s.add_argument("--N", type=int, default=4)
    s.add_argument("--n-cut", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", default="fock_report.json")
    s.set_defaults(func=cmd_fock_verify)

    s = sub.add_parser("nbody-compare", help="exact many-body MGF and tails along a trajectory")
    s.add_argument("--traj", required=True)
    s.add_argument("--N-list", default="2,3,4")
    s.add_argument("--O-kind", default="cosine", choices=sorted(cfgmod.OBSERVABLES))
    s.add_argument("--O-params", default="")
    s.add_argument("--lambda-grid", default="0:1:11")
    s.add_argument("--x-grid", default="0.05:0.5:10")
    s.add_argument("--t", type=float, default=None)
    s.add_argument("--dim-cap", type=int, default=cfgmod.NBODY_CAP)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_nbody_compare)

    s = sub.add_parser("ldp-table", help="optimal tilt and rate function on an x grid")
    s.add_argument("--alpha2", type=float, required=True)
    s.add_argument("--beta", type=float, default=0.0)
    s.add_argument("--lambda-max", type=float, default=None)
    s.add_argument("--x-grid", default="0.05:0.5:10")
    s.add_argument("--N", type=int, default=10)
    s.add_argument("--out", default="ldp_table.csv")
    s.set_defaults(func=cmd_ldp_table)

    s = sub.add_parser("run", help="full pipeline from a JSON config")
    s.add_argument("config")
    s.add_argument("--out", default=None)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("validate", help="check caps and estimate cost of a config")
    s.add_argument("config")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            code = args.func(args)
    except MfldpError as exc:
        stage = getattr(exc, "stage", None)
        where = f" [stage {stage}]" if stage else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ArithmeticError as exc:
        print(f"numerical error [stage {getattr(exc, 'stage', '?')}]: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        stage = getattr(exc, "stage", None)
        where = f" [stage {stage}]" if stage else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return 2
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
