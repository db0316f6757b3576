"""Batch command-line front end over the library modules.

    kinkwave classify MODEL        zero-energy classification (JSON)
    kinkwave scattering MODEL      T/R coefficient table (CSV)
    kinkwave dft-selftest MODEL    transform health report (JSON)
    kinkwave spectrum MODEL        discrete spectrum / gap scan (JSON)
    kinkwave evolve MODEL          nonlinear run around the background (npz + JSON)
    kinkwave modscat RUNDIR        log-phase fit of a stored evolve run (JSON)

Model keys follow the registry: phi4 | sg | dsg:eta | nlkg:p | pt:c:w |
gauss:A:w | flat.  Every command writes a manifest.json holding the hashed
configuration, the grid signature, the list of checks the outputs support,
and the wall time.  Payload CSV/JSON files are byte-reproducible for a fixed
configuration; only the manifest carries time-varying fields.

Exit codes: 0 success, 2 usage, 3 physics precondition failed (bound state
in the sector, unusable scattering data, cache mismatch, domain rule),
4 numerical failure (divergence, blow-up, non-finite output).
"""

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from . import dft as _dft
from . import evolve as _evolve
from . import jost as _jost
from . import models as _models
from . import scattering as _scat
from . import spectrum as _spectrum
from .numerics import (AlignmentError, DivergedIntegrationError, SizingError,
                       make_grids, quadrature, real_grid)
from .normalform import PhaseFloorError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PHYSICS = 3
EXIT_NUMERICS = 4

# criterion tolerances applied by the transform selftest
SELFTEST_TOL = {"plancherel": 1e-6, "wave_operator": 1e-6,
                "intertwining": 1e-5, "parity": 1e-10}

_PHYSICS_ERRORS = (_dft.BoundStatePresentError, _dft.AsymptoticRegimeError,
                   _dft.CacheMismatchError, _scat.DataQualityError,
                   _evolve.EvolveDomainError, PhaseFloorError,
                   _spectrum.DiscretizationQualityError)
_NUMERIC_ERRORS = (_evolve.BlowUpError, _evolve.InconsistentStateError,
                   DivergedIntegrationError, np.linalg.LinAlgError,
                   FloatingPointError)


@dataclass(frozen=True)
class RunConfig:
    """Hashable record of everything that determines a command's output."""

    command: str
    model: str
    grid: tuple
    options: dict

    def as_dict(self):
        L, n, Xi, m = self.grid
        return {"command": self.command, "model": self.model,
                "grid": {"L": L, "n": n, "Xi": Xi, "m": m},
                "options": dict(sorted(self.options.items()))}

    def config_hash(self):
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def grid_signature(self):
        L, n, Xi, m = self.grid
        return f"L={L!r};n={n};Xi={Xi!r};m={m}"


def _dump_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _complex_pair(z):
    return [float(np.real(z)), float(np.imag(z))]


def _write_manifest(out_dir, config: RunConfig, checks, outputs, wall_time):
    payload = {
        "command": config.command,
        "config": config.as_dict(),
        "config_hash": config.config_hash(),
        "grid_signature": config.grid_signature(),
        "checks": list(checks),
        "outputs": sorted(outputs),
        "wall_time_s": wall_time,
        "generated_at": datetime.now(timezone.utc).isoformat(),
    }
    path = os.path.join(out_dir, "manifest.json")
    _dump_json(path, payload)
    return path


def _parse_grid(text):
    parts = text.split(":")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(
            f"--grid wants L:n:Xi:m, got {text!r}")
    try:
        return (float(parts[0]), int(parts[1]), float(parts[2]), int(parts[3]))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _parse_window(text):
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"--window wants LO:HI, got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    if hi <= lo:
        raise argparse.ArgumentTypeError(f"empty window {text!r}")
    return lo, hi


def _ensure_out(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _scattering_chain(model_key, grid):
    """model key + grid -> (potential, grids, jost tables, scattering data)."""
    model = _models.resolve(model_key)
    pot = _models.potential_of(model)
    L, n, Xi, m = grid
    rg, fg = make_grids(L, n, Xi, m)
    jd = _jost.compute_jost(pot, rg, fg)
    sd = _jost.scattering_coefficients(jd)
    return model, pot, rg, fg, jd, sd


def _plan_for(pot, rg, fg, jd, sd, parity, cache_dir):
    """Build the transform plan, going through the npz cache when asked."""
    if cache_dir is None:
        return _dft.build_plan(sd, jd, parity=parity, potential_name=pot.name)
    os.makedirs(cache_dir, exist_ok=True)
    key = _dft.plan_cache_key(pot.name, jd.V, rg, fg, parity=parity)
    path = os.path.join(cache_dir, f"plan-{key[:16]}.npz")
    if os.path.exists(path):
        return _dft.load_plan(path, expected_key=key)
    plan = _dft.build_plan(sd, jd, parity=parity, potential_name=pot.name)
    _dft.save_plan(plan, path)
    return plan


# ---------------------------------------------------------------------------
# commands


def cmd_classify(args):
    t0 = time.perf_counter()
    model, pot, rg, fg, jd, sd = _scattering_chain(args.model, args.grid)
    cls = _jost.classify_zero_energy(sd, jd)
    out = _ensure_out(args)
    payload = {
        "name": pot.name,
        "class": cls.kind,
        "a": float(cls.a),
        "T0": _complex_pair(sd.T0),
        "Rplus0": _complex_pair(sd.R_plus0),
        "Rminus0": _complex_pair(sd.R_minus0),
        "unitarity_defect": float(sd.unitarity_defect()),
    }
    path = os.path.join(out, "classify.json")
    _dump_json(path, payload)
    cfg = RunConfig("classify", args.model, args.grid, {})
    _write_manifest(out, cfg, ["zero-energy class of the transmission limit",
                               "unitarity of the coefficient table"],
                    [os.path.basename(path)], time.perf_counter() - t0)
    print(f"{pot.name}: {cls.kind} (a = {cls.a:.6f})")
    return EXIT_OK


def cmd_scattering(args):
    t0 = time.perf_counter()
    model, pot, rg, fg, jd, sd = _scattering_chain(args.model, args.grid)
    out = _ensure_out(args)
    path = os.path.join(out, "scattering.csv")
    _jost.write_scattering_csv(sd, path)
    cfg = RunConfig("scattering", args.model, args.grid, {})
    _write_manifest(out, cfg, ["pointwise |T|^2 + |R|^2 = 1",
                               "off-diagonal pairing T conj(R-) + R+ conj(T) = 0"],
                    [os.path.basename(path)], time.perf_counter() - t0)
    print(f"{pot.name}: wrote {sd.fgrid.xi.size} rows, "
          f"unitarity defect {sd.unitarity_defect():.3e}")
    return EXIT_OK


def _packet_suite(rng, rg, count):
    """Random packets with closed-form second derivatives.

    Widths and carriers keep the spectrum well separated from xi = 0, where
    the wave operator loses its certification, and inside the frequency
    window.
    """
    fs, d2fs = [], []
    for _ in range(count):
        x0 = rng.uniform(-3.0, 3.0)
        w = rng.uniform(3.5, 4.5)
        k0 = rng.choice([-1.0, 1.0]) * rng.uniform(2.0, 2.5)
        ph = rng.uniform(0.0, 2.0 * np.pi)
        q = (rg.x - x0) / w
        env = np.exp(-q * q)
        c = np.cos(k0 * (rg.x - x0) + ph)
        s = np.sin(k0 * (rg.x - x0) + ph)
        f = env * c
        d2f = env * ((4.0 * q * q - 2.0) / w ** 2 * c
                     + 4.0 * q * k0 / w * s - k0 ** 2 * c)
        fs.append(f)
        d2fs.append(d2f)
    return fs, d2fs


def cmd_dft_selftest(args):
    t0 = time.perf_counter()
    model = _models.resolve(args.model)
    pot = _models.potential_of(model)
    L, n, Xi, m = args.grid
    rg, fg = make_grids(L, n, Xi, m)
    if pot.name == "flat":
        plan = _dft.build_flat_plan(rg, fg)
    else:
        jd = _jost.compute_jost(pot, rg, fg)
        sd = _jost.scattering_coefficients(jd)
        plan = _plan_for(pot, rg, fg, jd, sd, None, args.cache)

    rng = np.random.default_rng(args.seed)
    fs, d2fs = _packet_suite(rng, rg, args.packets)
    V = plan.V
    W = _dft.wave_operator(plan)

    plancherel = wave_op = intertwine = parity = 0.0
    for f, d2f in zip(fs, d2fs):
        ft = _dft.forward(plan, f)
        px = quadrature(np.abs(f) ** 2, rg)
        pf = fg.integrate(np.abs(ft) ** 2)
        plancherel = max(plancherel, abs(pf - px) / px)

        g = W.adjoint(W(f))
        wave_op = max(wave_op, np.sqrt(
            quadrature(np.abs(g - f) ** 2, rg) / px))

        hf = -d2f + V * f
        lhs = _dft.forward(plan, hf)
        rhs = fg.xi ** 2 * ft
        intertwine = max(intertwine, np.abs(lhs - rhs).max() / np.abs(rhs).max())

        fe = 0.5 * (f + f[::-1])
        fo = 0.5 * (f - f[::-1])
        fte = _dft.forward(plan, fe)
        fto = _dft.forward(plan, fo)
        parity = max(parity,
                     np.abs(fte - fte[::-1]).max() / max(np.abs(fte).max(), 1e-300),
                     np.abs(fto + fto[::-1]).max() / max(np.abs(fto).max(), 1e-300))

    results = {"plancherel": plancherel, "wave_operator": wave_op,
               "intertwining": intertwine, "parity": parity}
    passed = {k: bool(results[k] < SELFTEST_TOL[k]) for k in results}
    out = _ensure_out(args)
    payload = {"name": pot.name, "packets": args.packets, "seed": args.seed,
               "defects": results, "tolerances": SELFTEST_TOL, "passed": passed}
    path = os.path.join(out, "dft_selftest.json")
    _dump_json(path, payload)
    cfg = RunConfig("dft-selftest", args.model, args.grid,
                    {"seed": args.seed, "packets": args.packets})
    _write_manifest(out, cfg, ["Plancherel identity on a packet suite",
                               "wave operator W*W = identity",
                               "H-to-xi^2 intertwining",
                               "parity preservation of the transform"],
                    [os.path.basename(path)], time.perf_counter() - t0)
    for k in ("plancherel", "wave_operator", "intertwining", "parity"):
        print(f"{k:14s} {results[k]:.3e}  ({'pass' if passed[k] else 'FAIL'})")
    return EXIT_OK if all(passed.values()) else EXIT_NUMERICS


def cmd_spectrum(args):
    t0 = time.perf_counter()
    model = _models.resolve(args.model)
    pot = _models.potential_of(model)
    L, n, Xi, m = args.grid
    rg = real_grid(L, n)
    report = _spectrum.discrete_spectrum(pot, 1.0, rg, threshold=-1e-6,
                                         parity=args.parity)
    payload = {"name": pot.name, "spectral": report.as_dict()}
    checks = ["discrete eigenvalues below the continuum with Richardson refinement"]
    if hasattr(model, "K"):
        gap = _spectrum.internal_mode_scan(model, rg)
        payload["gap_modes"] = [float(v) for v in gap.internal_modes]
        checks.append("internal modes strictly inside the spectral gap")
        darboux_grid = real_grid(min(L, 20.0), n)
        dx_report = _spectrum.darboux_check(model, darboux_grid)
        payload["darboux"] = dx_report.as_dict()
        checks.append("Darboux factorization and sign condition")
    out = _ensure_out(args)
    path = os.path.join(out, "spectrum.json")
    _dump_json(path, payload)
    cfg = RunConfig("spectrum", args.model, args.grid,
                    {"parity": args.parity})
    _write_manifest(out, cfg, checks, [os.path.basename(path)],
                    time.perf_counter() - t0)
    vals = ", ".join(f"{v:.6f}" for v in report.eigenvalues)
    print(f"{pot.name}: eigenvalues [{vals}]")
    return EXIT_OK


def _initial_packet(rg, parity, eps, mass2=1.0):
    """Deterministic localized data with sup amplitude eps and u_t = 0.

    Width is two Compton lengths 2/m so the packet sits in the dispersive
    band of the scenario's own mass; a fixed width would leave small-mass
    models (DSG) ballistic for the whole run.
    """
    y = rg.x * (np.sqrt(mass2) / 2.0)
    if parity == "even":
        u0 = eps * np.exp(-0.5 * y * y)
    else:
        u0 = eps * np.sqrt(np.e) * y * np.exp(-0.5 * y * y)
    return u0, np.zeros_like(u0)


def cmd_evolve(args):
    t0 = time.perf_counter()
    if args.grid is None:
        L = args.tend + 10.0
        n = int(round(2 * L / 0.1)) + 1
        if n % 2 == 0:
            n += 1
        args.grid = (L, n, 6.0, 512)
    model, pot, rg, fg, jd, sd = _scattering_chain(args.model, args.grid)
    parity = args.parity or "odd"
    plan = _plan_for(pot, rg, fg, jd, sd, parity, args.cache)
    snaps = np.unique(np.round(np.geomspace(max(1.0, args.dt), args.tend, 33)
                               / args.dt) * args.dt)
    cfg_ev = _evolve.EvolveConfig(dt=args.dt, t_end=args.tend, parity=parity,
                                  enforce_parity=args.enforce_parity,
                                  snapshot_times=tuple(snaps))
    initial = _initial_packet(rg, parity, args.eps,
                              mass2=float(getattr(model, "m2", 1.0)))
    result = _evolve.evolve_perturbation(model, initial, cfg_ev, plan)
    out = _ensure_out(args)
    npz_path, run_manifest = _evolve.save_run(result, cfg_ev, out, tag="run",
                                              xi=fg.xi)
    report = {
        "name": pot.name,
        "eps": args.eps,
        "parity": parity,
        "energy_drift": result.energy_drift,
        "decay_exponent": result.decay.exponent,
        "final_sup": float(result.snapshots[-1].sup_u),
        "max_parity_defect": float(max(s.parity_defect for s in result.snapshots)),
        "warnings": list(result.warnings),
    }
    path = os.path.join(out, "evolve_report.json")
    _dump_json(path, report)
    cfg = RunConfig("evolve", args.model, args.grid,
                    {"dt": args.dt, "tend": args.tend, "eps": args.eps,
                     "parity": parity, "enforce_parity": args.enforce_parity})
    _write_manifest(out, cfg, ["relative energy drift along the run",
                               "parity preservation of the perturbation",
                               "sup-norm dispersive decay rate"],
                    [os.path.basename(path), os.path.basename(npz_path),
                     os.path.basename(run_manifest)],
                    time.perf_counter() - t0)
    print(f"{pot.name}: drift {result.energy_drift:.3e}, "
          f"decay exponent {result.decay.exponent:+.3f}")
    return EXIT_OK


def cmd_modscat(args):
    t0 = time.perf_counter()
    manifest_path = os.path.join(args.rundir, "manifest.json")
    with open(manifest_path) as fh:
        run_manifest = json.load(fh)
    run_cfg = run_manifest["config"]
    model_key = run_cfg["model"]
    grid = (run_cfg["grid"]["L"], run_cfg["grid"]["n"],
            run_cfg["grid"]["Xi"], run_cfg["grid"]["m"])
    with np.load(os.path.join(args.rundir, "run.npz")) as z:
        times = z["profile_times"]
        profiles = z["profiles"]
        xi = z["xi"]

    model = _models.resolve(model_key)
    pot = _models.potential_of(model)
    ell_plus = float(getattr(model, "ell_plus", 0.0))
    ell_minus = float(getattr(model, "ell_minus", 0.0))
    if pot.name == "flat":
        smatrix = None
    else:
        _, _, _, _, _, sd = _scattering_chain(model_key, grid)
        smatrix = _scat.s_matrix(sd)

    fit = _scat.fit_modified_scattering(times, xi, profiles, smatrix,
                                        ell_plus, ell_minus,
                                        window=args.window, xis=args.xis)
    out = _ensure_out(args)
    payload = {"name": pot.name, "run": os.path.abspath(args.rundir),
               "ell_plus": ell_plus, "ell_minus": ell_minus,
               "records": fit.as_records()}
    path = os.path.join(out, "modscat.json")
    _dump_json(path, payload)
    cfg = RunConfig("modscat", model_key, grid,
                    {"window": list(args.window) if args.window else None,
                     "xis": list(args.xis) if args.xis else None})
    _write_manifest(out, cfg, ["log-time phase slope of the rotated profile pair",
                               "amplitude flatness of |Z| on the window"],
                    [os.path.basename(path)], time.perf_counter() - t0)
    for r in fit.records:
        print(f"xi {r.xi:+.4f}: slope {r.slope_fit:+.6f} "
              f"(predicted {r.slope_predicted:+.6f}), r2 {r.r2:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p, default_grid, with_cache=True):
    p.add_argument("--grid", type=_parse_grid, default=default_grid,
                   metavar="L:n:Xi:m", help="real/frequency grid sizing")
    p.add_argument("--out", default="out", metavar="DIR",
                   help="output directory (created if missing)")
    if with_cache:
        p.add_argument("--cache", default=None, metavar="DIR",
                       help="plan cache directory")


def _add_parity(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--odd", dest="parity", action="store_const", const="odd",
                   help="odd sector")
    g.add_argument("--even", dest="parity", action="store_const", const="even",
                   help="even sector")
    p.set_defaults(parity=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kinkwave",
        description="Scattering, distorted transforms and kink perturbation runs.")
    sub = parser.add_subparsers(dest="command", required=True)
    default_grid = (28.0, 1401, 6.0, 288)

    p = sub.add_parser("classify", help="zero-energy classification")
    p.add_argument("model")
    _add_common(p, default_grid, with_cache=False)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("scattering", help="T/R coefficient table")
    p.add_argument("model")
    _add_common(p, default_grid, with_cache=False)
    p.set_defaults(func=cmd_scattering)

    p = sub.add_parser("dft-selftest", help="transform health checks")
    p.add_argument("model")
    # the wider frequency window keeps the suite's carrier tails inside it
    _add_common(p, (28.0, 1401, 8.0, 384))
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--packets", type=int, default=20)
    p.set_defaults(func=cmd_dft_selftest)

    p = sub.add_parser("spectrum", help="discrete spectrum and gap scan")
    p.add_argument("model")
    _add_common(p, (40.0, 2049, 6.0, 288), with_cache=False)
    _add_parity(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("evolve", help="nonlinear perturbation run")
    p.add_argument("model")
    p.add_argument("--grid", type=_parse_grid, default=None, metavar="L:n:Xi:m",
                   help="real/frequency grid sizing (default sized from --tend)")
    p.add_argument("--out", default="out", metavar="DIR")
    p.add_argument("--cache", default=None, metavar="DIR")
    p.add_argument("--dt", type=float, default=0.04)
    p.add_argument("--tend", type=float, default=50.0)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--enforce-parity", action="store_true")
    _add_parity(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("modscat", help="log-phase fit of a stored run")
    p.add_argument("rundir")
    p.add_argument("--window", type=_parse_window, default=None, metavar="LO:HI")
    p.add_argument("--xis", type=float, nargs="*", default=None,
                   help="positive frequencies to fit (default: largest amplitude)")
    p.add_argument("--out", default="out", metavar="DIR")
    p.set_defaults(func=cmd_modscat)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _PHYSICS_ERRORS as exc:
        print(f"physics precondition failed: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyError, ValueError, SizingError, AlignmentError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
