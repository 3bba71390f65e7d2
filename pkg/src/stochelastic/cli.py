"""Command-line driver: sample | sweep | estimate | invert | validate.

Exit codes: 0 success, 2 configuration error, 3 numeric failure (a manifest
is written to the output directory), 4 validation-suite failure.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import inversion as inv
from . import validation as val
from .config import ConfigError, explain, load_config, validate
from .randfield import (
    FieldSpec,
    derive_seed,
    sample_potential,
    spectral_slope,
    synthesize_periodic,
    write_field_binary,
    write_field_csv,
)
from .statistic import EstimateResult, SweepDataset, analytic_rhs, estimate, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SUITE = 0, 2, 3, 4
REPORT_SCHEMA_VERSION = 1

log = logging.getLogger("stochelastic")


class NumericFailure(RuntimeError):
    def __init__(self, message, manifest=None):
        super().__init__(message)
        self.manifest = manifest or {}


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _field_spec(cfg, grid):
    return FieldSpec(cfg.field.m, cfg.phi_on(grid), cfg.field.seed, cfg.field.padding_factor)


# --- sample --------------------------------------------------------------------


def cmd_sample(cfg, out, args):
    grid = cfg.solver_grid()
    spec = _field_spec(cfg, grid)
    files = []
    for k in range(args.count):
        rho = sample_potential(grid, spec, index=None if args.count == 1 else k)
        stem = out / f"realization_{k:04d}"
        write_field_binary(stem.with_suffix(".bin"), rho)
        write_field_csv(stem.with_suffix(".csv"), rho)
        files.append(stem.name)
    report = {"schema_version": REPORT_SCHEMA_VERSION, "grid": _grid_dict(grid), "files": files}
    if args.validate:
        n = 128
        rng = np.random.default_rng(derive_seed(cfg.field.seed, 2**32))
        fields = synthesize_periodic((n, n), 1.0 / n, cfg.field.m, rng, count=args.validate_count)
        slope = spectral_slope(fields, 1.0 / n)
        report["validation"] = {
            "periodogram_slope": slope,
            "target": -cfg.field.m,
            "tolerance": 0.15,
            "passed": bool(abs(slope + cfg.field.m) <= 0.15),
            "realizations": args.validate_count,
        }
    _dump(out / "sample_report.json", report)
    return EXIT_OK


def _grid_dict(grid):
    return {"origin": list(grid.origin), "h": grid.h, "nx": grid.nx, "ny": grid.ny}


# --- sweep ---------------------------------------------------------------------


def cmd_sweep(cfg, out, args):
    validate(cfg, stage="sweep")
    grid = cfg.solver_grid()
    band = cfg.band_obj()
    spec = _field_spec(cfg, grid)
    receivers = cfg.receivers()
    log.info("sweep: %d receivers, %d frequencies, grid %dx%d (h=%.5g), mode %s",
             len(receivers), band.count, grid.nx, grid.ny, grid.h, cfg.solver.mode)
    t0 = time.perf_counter()
    ds = run_sweep(spec, grid, cfg.elastic, band, receivers, mode=cfg.solver.mode,
                   born_terms=cfg.solver.born_terms, omega_threshold=cfg.solver.omega_threshold,
                   on_failure="record", workers=args.threads)
    elapsed = time.perf_counter() - t0
    for w, dt in zip(band.omegas, ds.meta["timings"]):
        log.info("omega=%.4f  %.3fs  (%.4fs per receiver)", w, dt, dt / len(receivers))
    ds.to_csv(out / "sweep.csv")
    timing = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "mode": cfg.solver.mode,
        "omega_threshold": ds.meta["omega_threshold"],
        "grid": _grid_dict(grid),
        "band": {"Q": band.q, "count": band.count, "spacing": band.spacing},
        "records": len(ds),
    }
    _dump(out / "sweep_meta.json", timing)
    log.info("sweep finished in %.1fs", elapsed)
    if ds.meta["failures"]:
        raise NumericFailure(f"{len(ds.meta['failures'])} frequencies failed",
                             {"stage": "sweep", "failures": ds.meta["failures"]})
    return EXIT_OK


# --- estimate ------------------------------------------------------------------

ESTIMATE_PLOT = '''"""Plot S_Q against the analytic limit per receiver (reads estimate.json)."""
import json
import matplotlib.pyplot as plt

est = json.load(open("estimate.json"))
rows = est["receivers"]
k = range(len(rows))
plt.plot(k, [r["S_Q"] for r in rows], "o", label="S_Q")
plt.plot(k, [r["rhs"] for r in rows], "-", label="analytic limit")
plt.xlabel("receiver index")
plt.ylabel("statistic")
plt.title("Q = %g" % est["Q"])
plt.legend()
plt.savefig("estimate.png", dpi=150)
'''


def cmd_estimate(cfg, out, args):
    validate(cfg, stage="estimate")
    path = Path(args.dataset) if args.dataset else out / "sweep.csv"
    if not path.exists():
        raise ConfigError([f"dataset {path} not found; run 'sweep' first or pass --dataset"])
    ds = SweepDataset.from_csv(path)
    missing = ds.missing()
    if missing:
        raise NumericFailure(f"dataset incomplete: {len(missing)} (receiver, omega) pairs missing",
                             {"stage": "estimate", "missing": missing})
    grid = cfg.d_grid()
    res = estimate(ds, cfg.phi_on(grid), grid, cfg.elastic, cfg.field.m, args.q)
    _dump(out / "estimate.json", res.to_dict())
    (out / "plot_estimate.py").write_text(ESTIMATE_PLOT)
    log.info("median relative deviation %.4f", float(np.median(res.rel_dev)))
    return EXIT_OK


# --- invert --------------------------------------------------------------------

INVERT_PLOT = '''"""Side-by-side maps of the true and recovered strength (reads comparison.csv)."""
import numpy as np
import matplotlib.pyplot as plt

d = np.genfromtxt("comparison.csv", delimiter=",", names=True)
n = int(round(np.sqrt(d.size)))
fig, ax = plt.subplots(1, 2, figsize=(9, 4))
for a, key in zip(ax, ("phi_true", "phi_hat")):
    im = a.imshow(d[key].reshape(n, n).T, origin="lower")
    a.set_title(key)
    fig.colorbar(im, ax=a)
plt.savefig("recovery.png", dpi=150)
'''


def cmd_invert(cfg, out, args):
    validate(cfg, stage="invert")
    grid = cfg.d_grid()
    receivers = cfg.receivers()
    fmap = inv.assemble_forward_map(receivers, grid, cfg.elastic, cfg.field.m)
    phi_true = cfg.phi_on(grid)
    if args.synthetic:
        d = analytic_rhs(phi_true, grid, cfg.elastic, cfg.field.m, receivers)
        if cfg.inversion.noise_level:
            d = inv.add_multiplicative_noise(d, cfg.inversion.noise_level, cfg.field.seed)
    else:
        path = Path(args.estimate) if args.estimate else out / "estimate.json"
        if not path.exists():
            raise ConfigError([f"estimate file {path} not found; run 'estimate' first, "
                               "pass --estimate PATH, or use --synthetic"])
        res = EstimateResult.from_dict(json.loads(path.read_text()))
        if not np.allclose(res.receivers, receivers):
            raise ConfigError(["estimate receivers do not match grids.arc in the config"])
        d = res.s_q
    results = inv.alpha_sweep(fmap, d, cfg.inversion.alphas)
    if cfg.inversion.noise_level:
        chosen = inv.discrepancy_choice(results, d, cfg.inversion.noise_level)
        rule = "discrepancy"
    elif args.synthetic:
        # inverse-crime benchmark: the true phi is known, report the best alpha
        chosen, _ = inv.best_alpha(results, phi_true)
        rule = "best_error"
    else:
        chosen = results[0]
        rule = "smallest_alpha"
    chosen.to_csv(out / "phi_hat.csv", grid)
    pts = grid.points().reshape(-1, 2)
    np.savetxt(out / "comparison.csv",
               np.column_stack([pts, phi_true.ravel(), chosen.phi.ravel()]),
               delimiter=",", header="x,y,phi_true,phi_hat", comments="", fmt="%.10g")
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "selection": rule,
        "chosen": chosen.diagnostics(),
        "relative_error": inv.relative_error(chosen.phi, phi_true),
        "sweep": [dict(r.diagnostics(), relative_error=inv.relative_error(r.phi, phi_true)) for r in results],
    }
    _dump(out / "recovery.json", report)
    (out / "plot_recovery.py").write_text(INVERT_PLOT)
    failed = [r.alpha for r in results if not r.converged]
    if failed:
        raise NumericFailure("Tikhonov solver did not converge",
                             {"stage": "invert", "alphas": failed,
                              "misfits": [r.misfit for r in results if not r.converged]})
    return EXIT_OK


# --- validate ------------------------------------------------------------------


def cmd_validate(cfg, out, args):
    suite = args.suite
    medium = cfg.elastic
    if suite == "hankel":
        checks = val.suite_hankel()
    elif suite == "green":
        checks = val.suite_green()
    elif suite == "field":
        checks = val.suite_field(cfg.field.m)
    elif suite == "born":
        grid = cfg.d_grid()
        spec = _field_spec(cfg, grid)
        rho = sample_potential(grid, spec)
        x = cfg.receivers()[0]
        checks = val.suite_born(grid, rho, medium, x, omega=args.omega)
    else:
        lo, hi = (np.asarray(v, float) for v in cfg.grids.box)
        half = 0.5 * float(np.min(hi - lo))
        taper = val.disc_taper(0.7 * half, 0.25 * half, center=0.5 * (lo + hi))
        checks = val.suite_oscillatory(cfg.phi_function(), cfg.receivers()[0], medium, cfg.field.m,
                                       taper=taper, box=cfg.grids.box)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "suite": suite,
        "checks": [c.as_dict() for c in checks],
        "passed": all(c.passed for c in checks),
    }
    _dump(out / f"validate_{suite}.json", report)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.6g} ({c.bound})")
    return EXIT_OK if report["passed"] else EXIT_SUITE


# --- entry point ---------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="stochelastic", description=__doc__.splitlines()[0])
    p.add_argument("--explain-config", action="store_true", help="describe every config field and exit")
    sub = p.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output directory (default: config 'output')")
        sp.add_argument("--seed", type=int, help="override field.seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("sample", help="sample potential realizations")
    common(sp)
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--validate", action="store_true", help="add a periodogram slope report")
    sp.add_argument("--validate-count", type=int, default=200)

    sp = sub.add_parser("sweep", help="scattered fields over the frequency band")
    common(sp)

    sp = sub.add_parser("estimate", help="frequency-averaged statistic and analytic limit")
    common(sp)
    sp.add_argument("--dataset", help="sweep CSV (default OUT/sweep.csv)")
    sp.add_argument("--q", type=float, help="average over [1, q] instead of the full band")

    sp = sub.add_parser("invert", help="recover phi from estimates or synthetic data")
    common(sp)
    sp.add_argument("--estimate", help="estimate JSON (default OUT/estimate.json)")
    sp.add_argument("--synthetic", action="store_true", help="use noiseless forward data of the true phi")

    sp = sub.add_parser("validate", help="run an invariant suite")
    common(sp)
    sp.add_argument("--suite", required=True, choices=val.SUITES)
    sp.add_argument("--omega", type=float, default=5.0, help="frequency for the born suite")
    return p


COMMANDS = {
    "sample": cmd_sample,
    "sweep": cmd_sweep,
    "estimate": cmd_estimate,
    "invert": cmd_invert,
    "validate": cmd_validate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.explain_config:
        print(explain())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, seed=args.seed)
        if args.threads < 1:
            raise ConfigError([f"--threads must be >= 1, got {args.threads}"])
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or Path(cfg.base_dir) / cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as exc:
        _dump(out / "failure_manifest.json", dict(exc.manifest, error=str(exc)))
        print(f"numeric failure: {exc} (see {out / 'failure_manifest.json'})", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        _dump(out / "failure_manifest.json", {"stage": args.command, "error": f"{type(exc).__name__}: {exc}"})
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
