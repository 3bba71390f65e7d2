"""JSON run configurations.

Every field is explicit in the file; the few optional ones are listed with
their defaults in ``FIELD_DOCS`` (printed by ``--explain-config``).
Validation collects every problem before raising, so one run reports all
bad fields at once.
"""

from dataclasses import asdict, dataclass, field
import json
import math
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .medium_green import ElasticMedium
from .randfield import GridD
from .statistic import MODES, FrequencyBand, arc_receivers, solver_spacing

SCHEMA_VERSION = 1
M_STAT_MIN = 5 / 3

FIELD_DOCS = {
    "schema_version": "integer, must be 1",
    "medium.lambda": "Lame lambda; lambda + 2 mu > 0",
    "medium.mu": "Lame mu; > 0",
    "field.m": "order of the field, in (1, 2]; sweep/estimate/invert need m > 5/3",
    "field.phi_profile.kind": "gaussian_bump | two_bumps | table",
    "field.phi_profile (gaussian_bump)": "center [x, y], width, amplitude, cutoff (default 3 * width)",
    "field.phi_profile (two_bumps)": "bumps: list of two gaussian_bump objects",
    "field.phi_profile (table)": "path to a CSV with columns x,y,phi on the D grid",
    "field.seed": "64-bit nonnegative integer",
    "field.padding_factor": ">= 2 (default 2)",
    "grids.box": "[[x0, y0], [x1, y1]], the domain D",
    "grids.h": "cell size of the D grid (inversion grid)",
    "grids.h_solver": "cell size of the scattering grid; null = largest h <= grids.h with "
    "pi/h >= oversample * 2 c_max Q (default null)",
    "grids.arc.center": "[x, y] of the receiver arc",
    "grids.arc.radius": "arc radius; receivers must lie outside closed D",
    "grids.arc.count": "number of receivers",
    "grids.arc.span": "[start, end] angles in radians (default [-pi/4, pi/4])",
    "band.Q": "upper end of the band [1, Q]",
    "band.count": "number of frequencies; null = smallest count with step <= "
    "pi / (4 c_max L_max) (default null)",
    "solver.mode": "direct | born_k | u1_only",
    "solver.born_terms": "terms of the Born sum (default 8)",
    "solver.omega_threshold": "direct-solve below this frequency; null = from norm proxy (default null)",
    "solver.oversample": "Nyquist margin used when h_solver is null (default 1.25)",
    "inversion.alphas": "list of positive regularization weights",
    "inversion.noise_level": "relative data noise for the discrepancy rule, or null",
    "output": "output directory (overridden by --out)",
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists one message per bad field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class MediumConfig:
    lam: float
    mu: float


@dataclass
class FieldConfig:
    m: float
    phi_profile: dict
    seed: int
    padding_factor: float = 2.0


@dataclass
class ArcConfig:
    center: tuple
    radius: float
    count: int
    span: tuple = (-math.pi / 4, math.pi / 4)


@dataclass
class GridsConfig:
    box: tuple
    h: float
    arc: ArcConfig
    h_solver: float | None = None


@dataclass
class BandConfig:
    Q: float
    count: int | None = None


@dataclass
class SolverConfig:
    mode: str = "direct"
    born_terms: int = 8
    omega_threshold: float | None = None
    oversample: float = 1.25


@dataclass
class InversionConfig:
    alphas: list = field(default_factory=lambda: [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1])
    noise_level: float | None = None


@dataclass
class RunConfig:
    medium: MediumConfig
    field: FieldConfig
    grids: GridsConfig
    band: BandConfig
    solver: SolverConfig
    inversion: InversionConfig
    output: str = "out"
    schema_version: int = SCHEMA_VERSION
    base_dir: str = "."

    # -- derived objects ----------------------------------------------------

    @property
    def elastic(self):
        return ElasticMedium(self.medium.lam, self.medium.mu)

    def d_grid(self):
        lo, hi = self.grids.box
        return GridD.box(lo, hi, self.grids.h)

    def solver_grid(self):
        if self.grids.h_solver is not None:
            return GridD.box(*self.grids.box, self.grids.h_solver)
        lo, hi = (np.asarray(v, dtype=float) for v in self.grids.box)
        # never coarser than the D grid
        target = min(self.grids.h, solver_spacing(self.elastic, self.band.Q, self.solver.oversample))
        # keep D tiled exactly: a whole number of cells along the longer side
        n = int(math.ceil(float(np.max(hi - lo)) / target - 1e-9))
        h = float(np.max(hi - lo)) / n
        return GridD.box(lo, hi, h)

    def receivers(self):
        a = self.grids.arc
        return arc_receivers(a.center, a.radius, a.count, tuple(a.span))

    def band_obj(self, grid=None):
        grid = self.d_grid() if grid is None else grid
        rec = self.receivers()
        if self.band.count is None:
            return FrequencyBand.resolved(self.band.Q, self.elastic, rec, grid)
        band = FrequencyBand(self.band.Q, self.band.count)
        band.check_resolution(self.elastic, rec, grid)
        return band

    def phi_function(self):
        return phi_profile(self.field.phi_profile, self.d_grid(), self.base_dir)

    def phi_on(self, grid):
        return self.phi_function()(grid.points())

    def to_dict(self):
        out = asdict(self)
        out.pop("base_dir")
        out["medium"] = {"lambda": self.medium.lam, "mu": self.medium.mu}
        return out


# --- strength profiles ---------------------------------------------------------


def _bump(center, width, amplitude, cutoff=None):
    cutoff = 3 * width if cutoff is None else cutoff
    c = np.asarray(center, dtype=float)

    def f(Z):
        r = np.hypot(Z[..., 0] - c[0], Z[..., 1] - c[1])
        t = np.minimum(r / cutoff, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            taper = np.where(t < 1, np.exp(1 - 1 / np.maximum(1 - t * t, 1e-300)), 0.0)
        return amplitude * np.exp(-(r * r) / (2 * width * width)) * taper

    return f


def phi_profile(spec: dict, grid: GridD, base_dir="."):
    """Callable phi(points) for a named profile."""
    kind = spec.get("kind")
    if kind == "gaussian_bump":
        return _bump(spec["center"], spec["width"], spec["amplitude"], spec.get("cutoff"))
    if kind == "two_bumps":
        parts = [_bump(b["center"], b["width"], b["amplitude"], b.get("cutoff")) for b in spec["bumps"]]
        return lambda Z: parts[0](Z) + parts[1](Z)
    if kind == "table":
        values = read_phi_table(Path(base_dir) / spec["path"], grid)
        xs, ys = grid.axes()
        interp = RegularGridInterpolator((xs, ys), values, bounds_error=False, fill_value=0.0)
        return lambda Z: np.maximum(interp(Z), 0.0)
    raise ValueError(f"unknown phi_profile kind {kind!r}")


def read_phi_table(path, grid: GridD):
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if arr.shape != (grid.size, 3):
        raise ValueError(f"{path}: expected {grid.size} rows of x,y,phi, found {arr.shape}")
    xs, ys = grid.axes()
    ix = np.rint((arr[:, 0] - xs[0]) / grid.h).astype(int)
    iy = np.rint((arr[:, 1] - ys[0]) / grid.h).astype(int)
    values = np.zeros(grid.shape)
    values[ix, iy] = arr[:, 2]
    return values


# --- loading and validation ----------------------------------------------------


def load_config(path, seed=None):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError([f"config file {path} not found"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file {path} is not valid JSON: {exc}"]) from None
    cfg = from_dict(raw, base_dir=str(path.parent))
    if seed is not None:
        cfg.field.seed = int(seed)
    validate(cfg)
    return cfg


def _get(obj, key, errors, where, default=..., kind=None):
    if key not in obj:
        if default is ...:
            errors.append(f"{where}.{key}: missing")
            return None
        return default
    val = obj[key]
    if kind is not None and val is not None:
        try:
            val = kind(val)
        except (TypeError, ValueError):
            errors.append(f"{where}.{key}: expected {kind.__name__}, got {val!r}")
            return None
    return val


def from_dict(raw, base_dir="."):
    errors = []
    if raw.get("schema_version") != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    sections = {}
    for name in ("medium", "field", "grids", "band", "solver", "inversion"):
        sec = raw.get(name)
        if not isinstance(sec, dict):
            errors.append(f"{name}: missing section")
            sec = {}
        sections[name] = sec
    med, fld, grd, bnd, sol, inv = (sections[k] for k in ("medium", "field", "grids", "band", "solver", "inversion"))
    arc = grd.get("arc") if isinstance(grd.get("arc"), dict) else {}
    if "arc" not in grd:
        errors.append("grids.arc: missing section")

    cfg = RunConfig(
        medium=MediumConfig(_get(med, "lambda", errors, "medium", kind=float),
                            _get(med, "mu", errors, "medium", kind=float)),
        field=FieldConfig(
            _get(fld, "m", errors, "field", kind=float),
            _get(fld, "phi_profile", errors, "field"),
            _get(fld, "seed", errors, "field", kind=int),
            _get(fld, "padding_factor", errors, "field", 2.0, kind=float),
        ),
        grids=GridsConfig(
            _get(grd, "box", errors, "grids"),
            _get(grd, "h", errors, "grids", kind=float),
            ArcConfig(
                _get(arc, "center", errors, "grids.arc"),
                _get(arc, "radius", errors, "grids.arc", kind=float),
                _get(arc, "count", errors, "grids.arc", kind=int),
                tuple(_get(arc, "span", errors, "grids.arc", (-math.pi / 4, math.pi / 4))),
            ),
            _get(grd, "h_solver", errors, "grids", None, kind=float),
        ),
        band=BandConfig(_get(bnd, "Q", errors, "band", kind=float),
                        _get(bnd, "count", errors, "band", None, kind=int)),
        solver=SolverConfig(
            _get(sol, "mode", errors, "solver", "direct"),
            _get(sol, "born_terms", errors, "solver", 8, kind=int),
            _get(sol, "omega_threshold", errors, "solver", None, kind=float),
            _get(sol, "oversample", errors, "solver", 1.25, kind=float),
        ),
        inversion=InversionConfig(
            _get(inv, "alphas", errors, "inversion", [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1]),
            _get(inv, "noise_level", errors, "inversion", None, kind=float),
        ),
        output=raw.get("output", "out"),
        schema_version=raw.get("schema_version"),
        base_dir=base_dir,
    )
    unknown = set(raw) - {"schema_version", "medium", "field", "grids", "band", "solver", "inversion", "output"}
    errors.extend(f"{k}: unknown field" for k in sorted(unknown))
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(cfg: RunConfig, stage=None):
    """Check every module precondition; ``stage`` adds the statistic-layer m bound."""
    errors = []
    m, mu, lam = cfg.field.m, cfg.medium.mu, cfg.medium.lam
    if not mu > 0:
        errors.append(f"medium.mu: must be > 0, got {mu}")
    if not lam + 2 * mu > 0:
        errors.append(f"medium.lambda: lambda + 2 mu must be > 0, got {lam + 2 * mu}")
    if not 1 < m <= 2:
        errors.append(f"field.m: order must lie in (1, 2], got {m}")
    elif stage in ("sweep", "estimate", "invert") and not m > M_STAT_MIN:
        errors.append(f"field.m: the {stage} stage needs m > 5/3, got {m}")
    if cfg.field.padding_factor < 2:
        errors.append(f"field.padding_factor: must be >= 2, got {cfg.field.padding_factor}")
    if not 0 <= cfg.field.seed < 2**64:
        errors.append(f"field.seed: must be a 64-bit nonnegative integer, got {cfg.field.seed}")
    if cfg.solver.mode not in MODES:
        errors.append(f"solver.mode: must be one of {MODES}, got {cfg.solver.mode!r}")
    if cfg.solver.born_terms < 1:
        errors.append(f"solver.born_terms: must be >= 1, got {cfg.solver.born_terms}")
    if cfg.solver.oversample < 1:
        errors.append(f"solver.oversample: must be >= 1, got {cfg.solver.oversample}")
    if cfg.solver.omega_threshold is not None and cfg.solver.omega_threshold < 1:
        errors.append("solver.omega_threshold: must be >= 1 or null")
    alphas = cfg.inversion.alphas
    if not isinstance(alphas, list) or not alphas or any(not (isinstance(a, (int, float)) and a > 0) for a in alphas):
        errors.append(f"inversion.alphas: must be a nonempty list of positive numbers, got {alphas!r}")
    nl = cfg.inversion.noise_level
    if nl is not None and not 0 < nl < 1:
        errors.append(f"inversion.noise_level: must lie in (0, 1) or be null, got {nl}")

    grid = None
    try:
        box = np.asarray(cfg.grids.box, dtype=float)
        if box.shape != (2, 2) or np.any(box[1] <= box[0]):
            raise ValueError
        if not cfg.grids.h > 0:
            errors.append(f"grids.h: must be > 0, got {cfg.grids.h}")
        else:
            grid = cfg.d_grid()
    except ValueError as exc:
        msg = str(exc) or "must be [[x0, y0], [x1, y1]] with x1 > x0, y1 > y0"
        errors.append(f"grids.box: {msg}")
    if cfg.grids.h_solver is not None and grid is not None:
        try:
            GridD.box(*cfg.grids.box, cfg.grids.h_solver)
        except ValueError as exc:
            errors.append(f"grids.h_solver: {exc}")

    arc = cfg.grids.arc
    if arc.count < 1:
        errors.append(f"grids.arc.count: must be >= 1, got {arc.count}")
    if not arc.radius > 0:
        errors.append(f"grids.arc.radius: must be > 0, got {arc.radius}")
    if not cfg.band.Q > 1:
        errors.append(f"band.Q: must exceed 1, got {cfg.band.Q}")
    if cfg.band.count is not None and cfg.band.count < 2:
        errors.append(f"band.count: must be >= 2, got {cfg.band.count}")

    if grid is not None and arc.count >= 1 and arc.radius > 0:
        rec = cfg.receivers()
        if np.any(grid.contains(rec, closed=True)):
            errors.append("grids.arc: receivers must lie outside the closure of D")
        elif cfg.band.Q > 1 and cfg.band.count is not None and cfg.band.count >= 2:
            try:
                cfg.band_obj(grid)
            except ValueError as exc:
                errors.append(f"band.count: {exc}")
    if grid is not None:
        try:
            phi = cfg.phi_on(grid)
            if np.any(phi < 0):
                errors.append("field.phi_profile: phi must be nonnegative")
            for label, g in (("D grid", grid), ("solver grid", cfg.solver_grid())):
                ph = phi if g is grid else cfg.phi_on(g)
                if np.any(ph[0]) or np.any(ph[-1]) or np.any(ph[:, 0]) or np.any(ph[:, -1]):
                    errors.append(f"field.phi_profile: phi must vanish on the boundary ring of the {label}")
            if not np.any(phi > 0):
                errors.append("field.phi_profile: phi vanishes everywhere")
        except (KeyError, ValueError, TypeError, OSError) as exc:
            errors.append(f"field.phi_profile: {exc}")
    if errors:
        raise ConfigError(errors)
    return cfg


def explain():
    width = max(len(k) for k in FIELD_DOCS)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in FIELD_DOCS.items())
