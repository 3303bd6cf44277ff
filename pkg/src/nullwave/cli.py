"""Command-line driver: scenario configs in, deterministic artifacts out.

Usage:
    nullwave {classify,mode,fdtd,geoptics,geometry,blowup} --config FILE
             [--out DIR] [--threads N]

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
All outputs (plus a run manifest with the config hash) are written to a
temporary directory and renamed into place atomically.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .algebra import example_system, system_from_dict
from .diagnostics import (fit_power_decay, fit_sqrt_exponential, region_volume,
                          sphere_cap_measure, weight_growth_check)
from .fdtd import (BlowupDetected, GridSpec, RhsOperator, evolve, initial_bump,
                   write_snapshot)
from .geoptics import (RayBundle, ansatz_residual, comparison_ode_check,
                       null_vector, phi0_closed_form, transport_solve)
from .modes import (GoursatGrid, ResolutionError, goursat_solve,
                    nirenberg_blowup_scan, sup_growth_profile)
from .profiles import WaveProfile, holder_half_seminorm
from .renormalize import (check_condition_two, growth_rate_estimate,
                          linearized_coefficients, solve_renormalizer)
from .algebra import check_condition_one


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = errors if isinstance(errors, list) else [errors]
        super().__init__("; ".join(self.errors))


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _require(cfg, keys, errors):
    for k in keys:
        if k not in cfg:
            errors.append(f"missing required key {k!r}")


def load_system(cfg, errors):
    spec = cfg.get("system")
    if isinstance(spec, str):
        try:
            return example_system(spec)
        except KeyError as e:
            errors.append(str(e))
    elif isinstance(spec, dict):
        try:
            return system_from_dict(spec)
        except Exception as e:  # malformed tensors are config errors
            errors.append(f"bad system: {e}")
    else:
        errors.append("'system' must be a name or a {N, forms} object")
    return None


def load_profile(cfg, errors, n=None):
    p = cfg.get("profile")
    if not isinstance(p, dict) or "amplitudes" not in p:
        errors.append("'profile' must be an object with 'amplitudes'")
        return None
    try:
        prof = WaveProfile(p["amplitudes"], p.get("shapes"))
    except Exception as e:
        errors.append(f"bad profile: {e}")
        return None
    if n is not None and prof.n != n:
        errors.append(f"profile has {prof.n} components, system has {n}")
        return None
    return prof


def _scalar_b(cfg, errors):
    """Scalar coefficient B(u) for mode/blowup runs.

    source "profile_derivative": B = scale * f'(u) of the named component;
    source "linearized": B = (B_y)_{11} from the renormalized tables.
    Returns (bfun, antideriv-or-None).
    """
    src = cfg.get("source", "profile_derivative")
    if src == "profile_derivative":
        prof = load_profile(cfg, errors)
        if prof is None:
            return None, None
        comp = int(cfg.get("component", 0))
        scale = float(cfg.get("scale", 1.0))
        f = prof.component(comp, 0)
        fp = prof.component(comp, 1)
        return (lambda u: scale * fp(u)), (lambda u: scale * f(u))
    if src == "linearized":
        system = load_system(cfg, errors)
        if system is None:
            return None, None
        prof = load_profile(cfg, errors, n=system.n)
        if prof is None:
            return None, None
        coeffs = linearized_coefficients(system, prof)
        return coeffs.scalar_by(), None
    errors.append(f"unknown mode source {src!r}")
    return None, None


def _write_csv(path, rows):
    keys = list(rows[0].keys()) if rows else []
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[k]) for k in keys) + "\n")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# task runners (each returns a dict of files written into out_dir)

def run_classify(cfg, out_dir):
    errors = []
    _require(cfg, ["system", "profile"], errors)
    system = load_system(cfg, errors) if "system" in cfg else None
    prof = load_profile(cfg, errors, n=system.n if system else None) \
        if "profile" in cfg else None
    if errors:
        raise ConfigError(errors)
    h = float(cfg.get("h", 1e-3))
    pad = float(cfg.get("pad", 0.05))

    active = prof.active_components()
    c1 = check_condition_one(system, active)
    renorm = solve_renormalizer(system, prof, h=h, pad=pad)
    coeffs = linearized_coefficients(system, prof, renorm=renorm)
    c2 = check_condition_two(coeffs)
    rate = growth_rate_estimate(coeffs)
    semi = {f"component_{i + 1}": holder_half_seminorm(prof, i).value
            for i in active}
    verdict = {
        "condition_one": c1.holds,
        "condition_one_violations": c1.violations,
        "condition_two": c2.satisfied,
        "condition_two_witness": {"theta": c2.theta, "u": c2.u, "value": c2.value},
        "growth_rate": {"K": rate.K, "u0": rate.u0, "u1": rate.u1,
                        "theta": rate.theta, "method": rate.method},
        "holder_half_seminorms": semi,
        "classification": ("stable" if c1.holds
                           else "unstable" if c2.satisfied else "indeterminate"),
    }
    _write_json(os.path.join(out_dir, "verdict.json"), verdict)
    _write_csv(os.path.join(out_dir, "coefficients.csv"), coeffs.to_rows())
    return ["verdict.json", "coefficients.csv"]


def run_mode(cfg, out_dir):
    errors = []
    _require(cfg, ["xi", "grid"], errors)
    bfun, _ = _scalar_b(cfg, errors)
    gcfg = cfg.get("grid", {})
    for k in ("u_min", "u_max", "h_u", "v_max", "h_v"):
        if k not in gcfg:
            errors.append(f"grid missing {k!r}")
    if errors:
        raise ConfigError(errors)
    grid = GoursatGrid(u_min=float(gcfg["u_min"]), u_max=float(gcfg["u_max"]),
                       h_u=float(gcfg["h_u"]), v_max=float(gcfg["v_max"]),
                       h_v=float(gcfg["h_v"]))
    refine = bool(cfg.get("refine", False))
    xis = cfg["xi"]
    if np.isscalar(xis[0]):
        xis = [xis]
    files = []
    fits = {}
    for k, xi in enumerate(xis):
        mode = goursat_solve(bfun, None, tuple(xi), grid, refine=refine)
        t, logmax = sup_growth_profile(mode)
        rows = [{"t": float(tt), "log_max_q": float(lm)}
                for tt, lm in zip(t, logmax)]
        name = f"growth_{k}.csv"
        _write_csv(os.path.join(out_dir, name), rows)
        files.append(name)
        try:
            fit = fit_sqrt_exponential(t, logmax, log_input=True)
            fits[f"xi_{k}"] = {"xi": list(xi), "K_fit": fit.K,
                               "r_squared": fit.r_squared}
        except ValueError as e:
            fits[f"xi_{k}"] = {"xi": list(xi), "error": str(e)}
    _write_json(os.path.join(out_dir, "fits.json"), fits)
    files.append("fits.json")
    return files


def run_fdtd(cfg, out_dir):
    errors = []
    _require(cfg, ["system", "profile", "grid", "t_max"], errors)
    system = load_system(cfg, errors) if "system" in cfg else None
    prof = load_profile(cfg, errors, n=system.n if system else None) \
        if "profile" in cfg else None
    gcfg = cfg.get("grid", {})
    if "L" not in gcfg or "h" not in gcfg:
        errors.append("grid needs 'L' and 'h'")
    if errors:
        raise ConfigError(errors)
    grid = GridSpec(L=float(gcfg["L"]), h=float(gcfg["h"]),
                    cfl=float(gcfg.get("cfl", 0.45)),
                    geometry=gcfg.get("geometry", "ball"),
                    widths=tuple(gcfg.get("widths", (4.0, 4.0))))
    mode = cfg.get("mode", "nonlinear")
    eps = float(cfg.get("eps", 1e-2))
    coeffs = renorm = None
    if mode == "gamma" or cfg.get("track_multiplier_energy", False):
        renorm = solve_renormalizer(system, prof)
        coeffs = linearized_coefficients(system, prof, renorm=renorm)
    elif cfg.get("track_gamma_energy", True):
        renorm = solve_renormalizer(system, prof)
    rhs = RhsOperator(mode, system=system, profile=prof, coeffs=coeffs)
    state = initial_bump(grid, system.n, eps,
                         components=tuple(cfg.get("components", (0,))),
                         k_y=int(cfg.get("k_y", 0)), k_z=int(cfg.get("k_z", 0)))
    ledger, state = evolve(state, rhs, float(cfg["t_max"]),
                           out_every=float(cfg.get("out_every", 1.0)),
                           renorm=renorm, coeffs=coeffs,
                           delta=float(cfg.get("delta", 0.05)),
                           collect_weighted_norms=bool(
                               cfg.get("weighted_norms", False)))
    ledger.write_csv(os.path.join(out_dir, "ledger.csv"))
    files = ["ledger.csv"]
    summary = {"t_final": state.t, "n_steps_recorded": len(ledger.rows)}
    try:
        t = ledger.column("t")
        s = ledger.column("sup_dpsi")
        fit = fit_power_decay(t, s)
        summary["sup_dpsi_power_fit"] = {"exponent": fit.exponent,
                                         "r_squared": fit.r_squared}
    except (ValueError, KeyError):
        pass
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    files.append("summary.json")
    if cfg.get("snapshot", True):
        write_snapshot(state, os.path.join(out_dir, "final"))
        files += ["final.bin", "final.json"]
    return files


def run_geoptics(cfg, out_dir):
    errors = []
    _require(cfg, ["u1", "u2", "T"], errors)
    bfun, _ = _scalar_b(cfg, errors)
    if errors:
        raise ConfigError(errors)
    u1, u2, T = float(cfg["u1"]), float(cfg["u2"]), float(cfg["T"])
    M = int(cfg.get("M", 1))
    bundle = RayBundle(u1=u1, u2=u2, T=T,
                       n_side=int(cfg.get("n_side", 4 * (M + 1) + 3)),
                       spacing=float(cfg.get("spacing", 0.05)),
                       n_t=int(cfg.get("n_t", 2001)))
    sol = transport_solve(bfun, None, bundle, order=M + 1)
    report = {"L": [float(v) for v in bundle.L], "M": M}
    mus = cfg.get("mu", [1000.0, 2000.0, 4000.0])
    report["residuals"] = {str(mu): ansatz_residual(sol, bfun, None, float(mu))
                           for mu in mus}
    mid = bundle.n_side // 2
    phi0 = sol.phis[0][:, mid, mid, mid]
    exact = phi0_closed_form(bfun, None, bundle, x0=-u1)
    report["phi0_rel_error"] = float(np.max(np.abs(phi0 - exact)
                                            / np.abs(exact)))
    rows = [{"t": float(tt), "phi0_re": float(p.real), "phi0_im": float(p.imag)}
            for tt, p in zip(bundle.t, phi0)]
    _write_csv(os.path.join(out_dir, "phi0.csv"), rows)
    if "comparison" in cfg:
        ccfg = cfg["comparison"]
        rep = comparison_ode_check(
            lambda a: np.atleast_2d(bfun(a * u2 + (1 - a) * u1)),
            u1, u2, float(ccfg.get("T", 1e4)), eps=float(ccfg.get("eps", 0.1)))
        report["comparison"] = {
            "T": rep.T, "growth_log": rep.growth_log,
            "lower_log": rep.lower_log, "upper_log": rep.upper_log,
            "lower_ok": rep.lower_ok, "upper_ok": rep.upper_ok,
            "eigen_gap": rep.eigen_gap, "conclusive": rep.conclusive}
    _write_json(os.path.join(out_dir, "report.json"), report)
    return ["phi0.csv", "report.json"]


def run_geometry(cfg, out_dir):
    seed = int(cfg.get("seed", 0))
    report = {}
    t_vol = cfg.get("t_volume", [4.0, 16.0, 64.0, 256.0])
    n = int(cfg.get("n_samples", 1_000_000))
    report["volumes"] = []
    for t in t_vol:
        est = region_volume(float(t), n_samples=n, seed=seed)
        report["volumes"].append({"t": float(t), "mu": est.value,
                                  "std_error": est.std_error,
                                  "bound_100t": 100.0 * float(t)})
    t_sig = cfg.get("t_sigma", [16.0, 64.0, 256.0, 1024.0])
    report["cap_measures"] = [
        {"t": float(t), "sigma_at_r_eq_t": sphere_cap_measure(float(t), float(t)),
         "t_sigma": float(t) * sphere_cap_measure(float(t), float(t))}
        for t in t_sig]
    if "weight_growth" in cfg:
        wcfg = cfg["weight_growth"]
        prof = WaveProfile(wcfg.get("amplitudes", [1.0]),
                           wcfg.get("shapes"))
        f1, f2 = prof.component(0, 1), prof.component(0, 2)
        report["weight_growth"] = {}
        for k in (1, 2):
            rep = weight_growth_check(f1, f2, k, seed=seed)
            report["weight_growth"][f"k_{k}"] = {
                "max_exponent": rep.max_exponent, "bound": rep.bound,
                "holds": rep.holds}
    _write_json(os.path.join(out_dir, "report.json"), report)
    return ["report.json"]


def run_blowup(cfg, out_dir):
    errors = []
    _require(cfg, ["xi", "deltas", "grid"], errors)
    bfun, banti = _scalar_b(cfg, errors)
    gcfg = cfg.get("grid", {})
    for k in ("u_min", "u_max", "h_u", "v_max", "h_v"):
        if k not in gcfg:
            errors.append(f"grid missing {k!r}")
    if errors:
        raise ConfigError(errors)
    grid = GoursatGrid(u_min=float(gcfg["u_min"]), u_max=float(gcfg["u_max"]),
                       h_u=float(gcfg["h_u"]), v_max=float(gcfg["v_max"]),
                       h_v=float(gcfg["h_v"]))
    scan = nirenberg_blowup_scan(bfun, tuple(cfg["xi"]), grid,
                                 cfg["deltas"], b_antideriv=banti)
    out = {"deltas": [float(d) for d in scan.deltas],
           "t_blow": [None if not np.isfinite(v) else float(v)
                      for v in scan.t_blow],
           "K_fit": scan.K_fit, "slope": scan.slope,
           "r_squared": scan.r_squared}
    _write_json(os.path.join(out_dir, "scan.json"), out)
    return ["scan.json"]


TASKS = {
    "classify": run_classify,
    "mode": run_mode,
    "fdtd": run_fdtd,
    "geoptics": run_geoptics,
    "geometry": run_geometry,
    "blowup": run_blowup,
}


def run_scenario(task, cfg, out_path, threads=None):
    """Execute a task, writing outputs and manifest atomically into out_path."""
    if threads:
        os.environ.setdefault("OMP_NUM_THREADS", str(threads))
        os.environ.setdefault("NUMBA_NUM_THREADS", str(threads))
    parent = os.path.dirname(os.path.abspath(out_path)) or "."
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".nullwave-", dir=parent)
    t0 = time.time()
    try:
        files = TASKS[task](cfg, tmp)
        manifest = {
            "tool": "nullwave",
            "version": __version__,
            "task": task,
            "config_sha256": config_hash(cfg),
            "outputs": sorted(files),
            "wall_time_s": round(time.time() - t0, 3),
        }
        _write_json(os.path.join(tmp, "manifest.json"), manifest)
        if os.path.isdir(out_path):
            shutil.rmtree(out_path)
        os.replace(tmp, out_path)
        return manifest
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="nullwave",
        description="plane-wave stability laboratory for null-form wave systems")
    parser.add_argument("task", choices=sorted(TASKS))
    parser.add_argument("--config", required=True, help="JSON scenario file")
    parser.add_argument("--out", default="nullwave-out", help="output directory")
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if not isinstance(cfg, dict):
        print("config error: top-level JSON object required", file=sys.stderr)
        return 2
    try:
        manifest = run_scenario(args.task, cfg, args.out, threads=args.threads)
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    except (BlowupDetected, ResolutionError, ValueError,
            np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
