"""Stages of the experiment and the end-to-end ``run``.

Every stage writes plain files into the output directory.  CSV files start
with a ``# seed=`` line; all floats carry 17 significant digits, so repeated
runs with the same configuration give byte-identical data files.  Wall-clock
timings go to ``timings.json`` and are the only run-dependent content
(``manifest.json`` records their hash).
"""

import hashlib
import json
import logging
import os
import platform
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import config as cfgmod
from . import fluctuation, hartree, ldp, nbody
from .errors import DimensionCapError
from .fieldio import dumps, fmt, save_trajectory
from .fock import identity_suite
from .lattice import Observable

log = logging.getLogger(__name__)

ENV_OUTPUT_ROOT = "MFLDP_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "mfldp-output"


def output_root(explicit=None) -> Path:
    """Explicit path, else ``$MFLDP_OUTPUT_ROOT``, else ``./mfldp-output``."""
    return Path(explicit or os.environ.get(ENV_OUTPUT_ROOT) or DEFAULT_OUTPUT_ROOT)


def write_csv(path, header, rows, seed=None):
    def cell(x):
        if isinstance(x, (bool, np.bool_)):
            return str(int(x))
        if isinstance(x, (int, np.integer)):
            return str(int(x))
        if isinstance(x, (float, np.floating)):
            return fmt(x)
        return str(x)

    lines = [] if seed is None else [f"# seed={seed}"]
    lines.append(",".join(header))
    lines += [",".join(cell(x) for x in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


# -- stages ----------------------------------------------------------------------------


def stage_hartree(phi0, v, t, dt, out_dir, meta=None, seed=None, fmt_="bin"):
    out = Path(out_dir)
    traj = hartree.evolve(phi0, v, t, dt)
    save_trajectory(out / "trajectory", traj, meta, fmt_)
    rows = zip(traj.times, traj.norms, traj.energies, traj.h4_norms)
    write_csv(out / "hartree_diagnostics.csv", ["t", "norm", "energy", "h4_norm"], rows, seed)
    return traj


def variance_curve(traj, O: Observable, samples: int):
    """``(t, alpha_t^2, Var_{phi_t}(O))`` at ``samples`` evenly spaced stored instants."""
    K = len(traj) - 1
    idx = np.unique(np.round(np.linspace(0, K, min(samples, K + 1))).astype(int))
    rows = []
    for k in idx:
        phi = traj.state(k)
        of = O.apply(phi.values)
        var_phi = phi.lattice.norm(of) ** 2 - O.expectation(phi) ** 2
        a2 = fluctuation.variance(O, traj.truncated(k))
        rows.append((float(traj.times[k]), a2, float(var_phi)))
    return rows


def stage_variance(traj, O: Observable, out_dir, samples=11, t=None, seed=None, prefix=""):
    out = Path(out_dir)
    if t is not None:
        traj = traj.truncated(traj.index_of(t))
    rows = variance_curve(traj, O, samples)
    write_csv(out / f"{prefix}variance.csv", ["t", "alpha2", "variance_phi_t"], rows, seed)
    sol = fluctuation.solve_for_observable(O, traj)
    profile = zip(sol.times, sol.norms, sol.drift)
    write_csv(out / f"{prefix}fluctuation_profile.csv", ["s", "f_norm", "orthogonality_drift"],
              profile, seed)
    return {"t": float(traj.times[-1]), "alpha2": float(sol.norms[0] ** 2), "curve": rows}


def stage_fock(M, N, n_cut, seed, out_path):
    t0 = time.perf_counter()
    checks = identity_suite(M, N, n_cut, seed=seed)
    report = {
        "M": M, "N": N, "n_cut": n_cut, "seed": seed,
        "all_passed": all(c.passed for c in checks.values()),
        # convergence-ratio checks have O(1) tolerances, so they are summarized relative to tolerance only
        "max_identity_residual": max((c.residual for k, c in checks.items()
                                      if c.asserted and not k.startswith("time-derivative")), default=0.0),
        "max_residual_over_tolerance": max((c.residual / c.tolerance for c in checks.values()
                                            if c.asserted), default=0.0),
        "checks": {k: c.as_dict() for k, c in checks.items()},
    }
    Path(out_path).write_text(dumps(report))
    log.info("fock battery (%d checks) in %.2fs", len(checks), time.perf_counter() - t0)
    return report


def nbody_statistics(traj, O: Observable, N_list, lambda_grid, x_grid, t=None,
                     dim_cap=cfgmod.NBODY_CAP, method="auto", krylov_dim=30, nbody_dt=0.05,
                     fd_step=1e-4):
    """Exact many-body MGF, tail and variance at time ``t`` for each ``N``."""
    k = len(traj) - 1 if t is None else traj.index_of(t)
    t_k = float(traj.times[k])
    lat = traj.lattice
    phi_t = traj.state(k)
    center = O.expectation(phi_t)
    alpha2 = fluctuation.variance(O, traj.truncated(k))
    lams = np.asarray(lambda_grid, float)
    xs = np.asarray(x_grid, float)
    results = []
    for N in N_list:
        space = nbody.NBodySpace(lat, N, dim_cap=dim_cap)
        H = nbody.hamiltonian(space, traj.v)
        psi0 = nbody.product_state(space, traj.state(0))
        psi = nbody.evolve(psi0, H, t_k, dt=nbody_dt, method=method, krylov_dim=krylov_dim)
        dist = nbody.sum_distribution(psi, O, center)
        lm = dist.log_mgf(np.array([-fd_step, 0.0, fd_step])) / N
        results.append({
            "N": N,
            "dim": space.dim,
            "t": t_k,
            "center": center,
            "alpha2": alpha2,
            "norm_drift": abs(psi.norm - 1.0),
            "energy_drift": abs(psi.expectation(H) - psi0.expectation(H)),
            "mean_over_N": dist.mean / N,
            "var_over_N": dist.variance / N,
            "fd_second_derivative": float((lm[0] - 2 * lm[1] + lm[2]) / fd_step**2),
            "mgf": dist.mgf(lams),
            "log_mgf_per_N": dist.log_mgf(lams) / N,
            "tail": dist.tail(xs),
        })
    return results


def stage_nbody(stats, lambda_grid, x_grid, out_dir, seed=None, prefix=""):
    out = Path(out_dir)
    lams = np.asarray(lambda_grid, float)
    xs = np.asarray(x_grid, float)
    rows = []
    for r in stats:
        N = r["N"]
        for i, lam in enumerate(lams):
            for j, x in enumerate(xs):
                env = float(np.exp(-lam * N * x) * r["mgf"][i])
                rows.append((N, lam, r["mgf"][i], r["log_mgf_per_N"][i], x, r["tail"][j], env))
    write_csv(out / f"{prefix}nbody_compare.csv",
              ["N", "lambda", "mgf", "log_mgf_per_N", "x", "tail", "chernoff_envelope"], rows, seed)
    keys = ["N", "dim", "t", "alpha2", "var_over_N", "mean_over_N", "fd_second_derivative",
            "norm_drift", "energy_drift"]
    summary = [[r[k] for k in keys] + [abs(r["var_over_N"] - r["alpha2"])] for r in stats]
    write_csv(out / f"{prefix}nbody_summary.csv", keys + ["abs_gap"], summary, seed)


def ldp_rows(p: ldp.LDPParams, x_grid, N):
    rows = []
    for x in x_grid:
        tilt = ldp.lambda_star(x, p)
        rows.append((float(x), tilt.lam, bool(tilt.clamped), ldp.rate_function(x, p),
                     ldp.chernoff_envelope(x, N, p)))
    return rows


def stage_ldp(p: ldp.LDPParams, x_grid, N, out_path, seed=None):
    write_csv(out_path, ["x", "lambda_star", "clamped", "gamma", "envelope"], ldp_rows(p, x_grid, N), seed)


def fitted_ldp_params(alpha2, stats, lambda_grid, beta=None, lambda_max=None, fit="lsq"):
    """Parameters for the table: ``beta`` fitted on the largest ``N`` unless supplied."""
    last = stats[-1]
    if beta is None:
        beta = ldp.fit_beta(lambda_grid, last["log_mgf_per_N"], alpha2, mode=fit)
    if lambda_max is None:
        p = ldp.LDPParams(alpha2, beta)
        lambda_max = ldp.admissible_window(lambda_grid, last["log_mgf_per_N"], p) or max(lambda_grid)
    return ldp.LDPParams(alpha2, beta, lambda_max)


# -- end-to-end ------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"package": pkg, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def write_manifest(out: Path, cfg_dict: dict, status: str, stages: list):
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "status": status,
        "stages": stages,
        "seed": cfg_dict.get("seed", 0),
        "config_sha256": hashlib.sha256(dumps(cfg_dict).encode()).hexdigest(),
        "versions": versions(),
        "files": {p.relative_to(out).as_posix(): _sha256(p) for p in files},
    }
    (out / "manifest.json").write_text(dumps(manifest))


def run(cfg: cfgmod.ExperimentConfig, out_dir=None) -> Path:
    """Run hartree, variance, fock, nbody and ldp stages into ``out_dir``.

    On failure a ``FAILED`` file names the stage, partial outputs stay in
    place, and the exception is re-raised with a ``stage`` attribute.
    """
    report = cfgmod.validate(cfg)
    if not report["ok"]:
        raise DimensionCapError("; ".join(report["problems"]))
    out = output_root(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").unlink(missing_ok=True)
    cfg_dict = cfg.as_dict()
    cfg_dict.pop("output_dir", None)
    (out / "config.json").write_text(dumps(cfg_dict))

    seed = cfg.seed
    lat = cfg.build_lattice()
    v = cfgmod.build_potential(lat, cfg.potential)
    phi0 = cfgmod.build_phi0(lat, cfg.phi0)
    O = cfgmod.build_observable(lat, cfg.observable)
    state, timings, done = {}, {}, []

    def do_hartree():
        state["traj"] = stage_hartree(phi0, v, cfg.t, cfg.dt, out,
                                      {"potential": cfg.potential, "phi0": cfg.phi0}, seed)

    def do_variance():
        state["variance"] = stage_variance(state["traj"], O, out, cfg.variance_samples, seed=seed)

    def do_fock():
        fp = cfg.fock_params()
        state["fock"] = stage_fock(fp["M"], fp["N"], fp["n_cut"], seed, out / "fock_report.json")

    def do_nbody():
        nb = cfg.nbody
        state["nbody"] = nbody_statistics(
            state["traj"], O, cfg.N_list, cfg.lambda_grid, cfg.x_grid, dim_cap=cfg.nbody_cap,
            method=nb.get("method", "auto"), krylov_dim=nb.get("krylov_dim", 30),
            nbody_dt=nb.get("dt", 0.05))
        stage_nbody(state["nbody"], cfg.lambda_grid, cfg.x_grid, out, seed)

    def do_ldp():
        lp = cfg.ldp
        p = fitted_ldp_params(state["variance"]["alpha2"], state["nbody"], cfg.lambda_grid,
                              lp.get("beta"), lp.get("lambda_max"), lp.get("fit", "lsq"))
        (out / "ldp_params.json").write_text(dumps(
            {"alpha2": p.alpha2, "beta": p.beta, "lambda_max": p.lambda_max, "N": max(cfg.N_list)}))
        stage_ldp(p, cfg.x_grid, max(cfg.N_list), out / "ldp_table.csv", seed)

    stages = [("hartree", do_hartree), ("variance", do_variance), ("fock-verify", do_fock),
              ("nbody", do_nbody), ("ldp", do_ldp)]
    for name, fn in stages:
        t0 = time.perf_counter()
        try:
            fn()
        except Exception as exc:
            timings[name] = time.perf_counter() - t0
            (out / "FAILED").write_text(f"stage: {name}\nerror: {type(exc).__name__}: {exc}\n")
            (out / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
            write_manifest(out, cfg_dict, "failed", done + [name])
            exc.stage = name
            raise
        timings[name] = time.perf_counter() - t0
        done.append(name)
        log.info("stage %s done in %.2fs", name, timings[name])
    (out / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    write_manifest(out, cfg_dict, "ok", done)
    return out
