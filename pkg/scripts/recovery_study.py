"""Best-alpha recovery error of the Gaussian bump under changes of geometry.

Varies the arc span, the bump width and centre, and extends the alpha sweep
below the configured range.  Uses the same forward map and solver as the
``invert`` command.

    python3 scripts/recovery_study.py --out results/recovery_study.json
"""

import argparse
import json
import math
from pathlib import Path

from stochelastic import inversion as inv
from stochelastic.config import load_config, phi_profile
from stochelastic.statistic import arc_receivers

ALPHAS = [10.0**k for k in range(-12, 0)]


def best_error(cfg, grid, phi, receivers, alphas):
    fmap = inv.assemble_forward_map(receivers, grid, cfg.elastic, cfg.field.m)
    results = inv.alpha_sweep(fmap, fmap.apply(phi), alphas)
    r, err = inv.best_alpha(results, phi)
    return {"error": err, "alpha": r.alpha, "converged": all(x.converged for x in results)}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(Path(__file__).parents[1] / "configs" / "reference.json"))
    ap.add_argument("--out", default="recovery_study.json")
    args = ap.parse_args()
    cfg = load_config(args.config)
    grid = cfg.d_grid()
    arc = cfg.grids.arc
    base = dict(cfg.field.phi_profile)
    phi = cfg.phi_on(grid)
    rec = cfg.receivers()
    rows = []

    def run(label, phi_, rec_, alphas=ALPHAS):
        row = dict(case=label, **best_error(cfg, grid, phi_, rec_, alphas))
        rows.append(row)
        print(f"{label:<28} error {row['error']:.3f} at alpha {row['alpha']:g}")

    run("reference, config alphas", phi, rec, cfg.inversion.alphas)
    run("reference, alpha to 1e-12", phi, rec)
    for span in (math.pi / 2, math.pi, 15 / 16 * 2 * math.pi):
        r = arc_receivers(arc.center, arc.radius, arc.count, (-span / 2, span / 2))
        run(f"span {span:.3f}", phi, r)
    for width in (0.1, 0.15, 0.2, 0.3):
        spec = dict(base, width=width)
        p = phi_profile(spec, grid)(grid.points())
        run(f"width {width}", p, rec)
    spec = dict(base, center=[0.15, 0.1], cutoff=0.3)
    run("off-centre bump", phi_profile(spec, grid)(grid.points()), rec)
    Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")


if __name__ == "__main__":
    main()
