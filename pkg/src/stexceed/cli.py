"""Command-line interface: data ingestion, config dispatch, artifact emission.

Subcommands
-----------
fit       REML-fit covariance parameters and the GLS trend; write a report.
exceed    Build exceedance confidence regions on a pixel grid; write one mask
          CSV and one SVG map per threshold.
simstudy  Run a synthetic coverage experiment; write a coverage CSV.

Configs are flat INI files (see README). All outputs are deterministic given
the config and seed: re-running overwrites byte-identical artifacts, and the
``--workers`` option never changes output bytes. The only environment
override is ``STEXCEED_OUTPUT`` for the output directory.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical error,
5 non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import condsim, covariance, exceedance, grid as gridmod, kriging, reml, \
    simstudy
from .exceedance import (CONFIDENT_EXCEED, CONFIDENT_NOT_EXCEED,
                         POSSIBLE_EXCEED)
from .linalg import NotPositiveDefiniteError


class ConfigError(ValueError):
    """Bad or missing configuration."""


class DataError(ValueError):
    """Input data could not be ingested."""


_NUMERIC_ERRORS = (covariance.ParameterDomainError,
                   exceedance.EmptyExceedanceDistributionError,
                   gridmod.DegenerateHullError, gridmod.EmptyGridError,
                   gridmod.SelfIntersectingPolygonError,
                   NotPositiveDefiniteError, np.linalg.LinAlgError)

_REGION_COLORS = {
    CONFIDENT_EXCEED: "#ffa500",      # orange: confidently inside
    POSSIBLE_EXCEED: "#1e90ff",       # blue: possibly inside
    CONFIDENT_NOT_EXCEED: "#ffffff",  # unshaded: confidently outside
}

_TRANSFORMS = {"identity": lambda v: v, "sqrt": math.sqrt, "log": math.log}


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IngestResult:
    coords: np.ndarray
    times: np.ndarray
    values: np.ndarray
    extras: dict  # column name -> np.ndarray


def ingest_csv(path, mapping: dict, transform: str = "identity",
               extra_columns: tuple[str, ...] = ()) -> IngestResult:
    """Read header-mapped observations from a CSV file.

    ``mapping`` names the x/y/time/value columns. The value transform
    (identity, sqrt, or log) is applied at ingest; a cell that cannot be
    parsed or transformed raises DataError naming its row and column.
    """
    try:
        fn = _TRANSFORMS[transform]
    except KeyError:
        raise ConfigError(f"unknown value transform {transform!r}")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot open data file {path}: {err}")
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: missing header row")
        needed = [mapping["x"], mapping["y"], mapping["time"], mapping["value"],
                  *extra_columns]
        for col in needed:
            if col not in reader.fieldnames:
                raise DataError(f"{path}: missing column {col!r}")
        coords, times, values = [], [], []
        extras = {c: [] for c in extra_columns}

        def cell(row, col, rownum):
            raw = row[col]
            try:
                v = float(raw)
            except (TypeError, ValueError):
                raise DataError(f"{path}: row {rownum}, column {col!r}: "
                                f"cannot parse {raw!r}")
            if not math.isfinite(v):
                raise DataError(f"{path}: row {rownum}, column {col!r}: "
                                f"non-finite value")
            return v

        for rownum, row in enumerate(reader, start=2):  # row 1 is the header
            coords.append((cell(row, mapping["x"], rownum),
                           cell(row, mapping["y"], rownum)))
            times.append(cell(row, mapping["time"], rownum))
            raw_value = cell(row, mapping["value"], rownum)
            try:
                values.append(fn(raw_value))
            except ValueError:
                raise DataError(f"{path}: row {rownum}: value {raw_value} is "
                                f"outside the domain of transform {transform!r}")
            for c in extra_columns:
                extras[c].append(cell(row, c, rownum))
    if not values:
        raise DataError(f"{path}: no data rows")
    return IngestResult(coords=np.array(coords, dtype=np.float64),
                        times=np.array(times, dtype=np.float64),
                        values=np.array(values, dtype=np.float64),
                        extras={c: np.array(v) for c, v in extras.items()})


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _read_ini(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}")
    except configparser.Error as err:
        raise ConfigError(f"malformed config {path}: {err}")
    return parser


def _get(parser, section, key, default=None, required=False):
    if parser.has_option(section, key):
        return parser.get(section, key).strip()
    if required:
        raise ConfigError(f"missing [{section}] {key}")
    return default


def _get_float(parser, section, key, default=None, required=False):
    raw = _get(parser, section, key, required=required)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}")


def _get_int(parser, section, key, default=None, required=False):
    raw = _get(parser, section, key, required=required)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}")


def _get_bool(parser, section, key, default=False):
    raw = _get(parser, section, key)
    if raw is None:
        return default
    if raw.lower() in ("1", "true", "yes", "on"):
        return True
    if raw.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key} must be a boolean, got {raw!r}")


def _split_list(raw: str) -> list[str]:
    return [tok.strip() for tok in raw.split(",") if tok.strip()]


def _param_entry(parser, section, key, default_value=None, required=False):
    """Parse '<number> [free|fixed]' entries; fixed when unmarked."""
    raw = _get(parser, section, key, required=required)
    if raw is None:
        return default_value, False
    parts = raw.split()
    try:
        value = float(parts[0])
    except (IndexError, ValueError):
        raise ConfigError(f"[{section}] {key} must look like '1.0 free', got {raw!r}")
    if len(parts) == 1:
        return value, False
    if len(parts) == 2 and parts[1] in ("free", "fixed"):
        return value, parts[1] == "free"
    raise ConfigError(f"[{section}] {key} must look like '1.0 free', got {raw!r}")


def _output_dir(parser) -> Path:
    out = os.environ.get("STEXCEED_OUTPUT") or _get(parser, "output", "dir",
                                                    required=True)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _model_from_config(parser):
    """CovarianceParams at the configured values plus the free-name list."""
    family = (_get(parser, "model", "spatial", default="exponential")).lower()
    free = []
    variance, v_free = _param_entry(parser, "model", "variance", required=True)
    if v_free:
        free.append("variance")
    corr_range, r_free = _param_entry(parser, "model", "range", required=True)
    if r_free:
        free.append("range")
    if family == "matern":
        smoothness, s_free = _param_entry(parser, "model", "smoothness",
                                          required=True)
        if s_free:
            free.append("smoothness")
        spatial = covariance.Matern(variance=variance, range=corr_range,
                                    smoothness=smoothness)
    elif family == "exponential":
        spatial = covariance.Exponential(variance=variance, range=corr_range)
    else:
        raise ConfigError(f"unknown spatial family {family!r}")
    rho, rho_free = _param_entry(parser, "model", "rho", required=True)
    if rho_free:
        free.append("rho")
    nugget_kind = (_get(parser, "model", "nugget", default="constant")).lower()
    if nugget_kind == "constant":
        nug, n_free = _param_entry(parser, "model", "nugget_variance",
                                   default_value=0.0)
        nugget = covariance.ConstantNugget(nug)
        if n_free:
            free.append("nugget")
    elif nugget_kind == "per_epoch":
        variances = {}
        for key in parser.options("model"):
            if key.startswith("nugget_variance."):
                epoch = key.split(".", 1)[1]
                val, e_free = _param_entry(parser, "model", key)
                variances[float(epoch)] = val
                if e_free:
                    free.append(f"nugget:{epoch}")
        if not variances:
            raise ConfigError("per_epoch nugget needs nugget_variance.<epoch> keys")
        nugget = covariance.PerEpochNugget(variances)
    else:
        raise ConfigError(f"unknown nugget kind {nugget_kind!r}")
    try:
        params = covariance.CovarianceParams(spatial=spatial,
                                             temporal=covariance.Ar1(rho),
                                             nugget=nugget)
    except covariance.ParameterDomainError as err:
        raise ConfigError(f"invalid model parameters: {err}")
    return params, tuple(free)


def _fit_config(parser, params, free) -> reml.FitConfig:
    return reml.FitConfig(
        initial=params, free=free,
        max_evals=_get_int(parser, "model", "max_evals", default=2000),
        x_tol=_get_float(parser, "model", "x_tol", default=1e-6),
        f_tol=_get_float(parser, "model", "f_tol", default=1e-8),
        ridge=_get_bool(parser, "model", "ridge", default=False),
        multi_start=_get_int(parser, "model", "multi_start", default=0))


def _covariate_builder(parser, data: IngestResult, grid=None, target_time=None):
    """Covariate rule shared by training and prediction points.

    Functional terms (intercept, coord1, coord2) evaluate anywhere; the
    elevation term is a lookup keyed by exact coordinates, populated from the
    data file and, when a grid is in play, from the gridded covariate file.
    """
    terms = _split_list(_get(parser, "data", "covariates", default="intercept"))
    known = {"intercept", "coord1", "coord2", "elevation"}
    for term in terms:
        if term not in known:
            raise ConfigError(f"unknown covariate term {term!r}")
    lookup = {}
    if "elevation" in terms:
        col = _get(parser, "data", "elevation_column", default="elevation")
        if col not in data.extras:
            raise ConfigError(f"elevation covariate needs data column {col!r}")
        for (x, y), v in zip(data.coords, data.extras[col]):
            lookup.setdefault((float(x), float(y)), float(v))
        if grid is not None:
            path = _get(parser, "grid", "elevation_file", required=True)
            for (x, y), v in _read_grid_covariate(path, grid):
                lookup.setdefault((float(x), float(y)), float(v))

    def builder(coords, times):
        cols = []
        for term in terms:
            if term == "intercept":
                cols.append(np.ones(coords.shape[0]))
            elif term == "coord1":
                cols.append(coords[:, 0])
            elif term == "coord2":
                cols.append(coords[:, 1])
            else:
                vals = np.empty(coords.shape[0])
                for i, (x, y) in enumerate(coords):
                    try:
                        vals[i] = lookup[(float(x), float(y))]
                    except KeyError:
                        raise DataError(f"no elevation value for point "
                                        f"({x!r}, {y!r})")
                cols.append(vals)
        return np.column_stack(cols)

    return builder


def _read_grid_covariate(path, grid):
    """Gridded covariate CSV {ix, iy, value} mapped to retained centers."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot open gridded covariate {path}: {err}")
    with fh:
        reader = csv.DictReader(fh)
        for col in ("ix", "iy", "value"):
            if reader.fieldnames is None or col not in reader.fieldnames:
                raise DataError(f"{path}: needs columns ix, iy, value")
        by_index = {}
        for rownum, row in enumerate(reader, start=2):
            try:
                by_index[(int(row["ix"]), int(row["iy"]))] = float(row["value"])
            except (TypeError, ValueError):
                raise DataError(f"{path}: row {rownum}: bad ix/iy/value")
    out = []
    for (cx, cy), (ix, iy) in zip(grid.centers, grid.indices):
        key = (int(ix), int(iy))
        if key not in by_index:
            raise DataError(f"{path}: no value for retained pixel ix={ix}, iy={iy}")
        out.append(((cx, cy), by_index[key]))
    return out


def _grid_from_config(parser, data: IngestResult):
    nx = _get_int(parser, "grid", "nx", required=True)
    ny = _get_int(parser, "grid", "ny", required=True)
    rect_raw = _get(parser, "grid", "rect")
    polygon_path = _get(parser, "grid", "polygon")
    use_hull = _get_bool(parser, "grid", "convex_hull", default=False)
    if sum(bool(v) for v in (rect_raw, polygon_path, use_hull)) != 1:
        raise ConfigError("[grid] needs exactly one of rect, polygon, convex_hull")
    if rect_raw:
        try:
            rect = tuple(float(v) for v in _split_list(rect_raw))
        except ValueError:
            raise ConfigError(f"[grid] rect must be x0, y0, x1, y1; got {rect_raw!r}")
        if len(rect) != 4:
            raise ConfigError("[grid] rect must have four entries")
        return gridmod.make_grid(rect, nx, ny)
    if polygon_path:
        ring = _read_ring(polygon_path)
        rect = (ring[:, 0].min(), ring[:, 1].min(),
                ring[:, 0].max(), ring[:, 1].max())
        return gridmod.mask_polygon(gridmod.make_grid(rect, nx, ny), ring)
    rect = (data.coords[:, 0].min(), data.coords[:, 1].min(),
            data.coords[:, 0].max(), data.coords[:, 1].max())
    return gridmod.mask_convex_hull(gridmod.make_grid(rect, nx, ny), data.coords)


def _read_ring(path) -> np.ndarray:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot open polygon file {path}: {err}")
    with fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and not row[0].lstrip().startswith("#")]
    header = 0
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        header = 1
    try:
        ring = np.array([[float(r[0]), float(r[1])] for r in rows[header:]])
    except (ValueError, IndexError):
        raise DataError(f"{path}: polygon rows must be x,y pairs")
    if ring.shape[0] < 3:
        raise DataError(f"{path}: polygon needs at least 3 vertices")
    return ring


def _dataset_from_config(parser, data: IngestResult, builder) -> kriging.Dataset:
    target_time = _get_float(parser, "data", "target_time", required=True)
    return kriging.Dataset(coords=data.coords, times=data.times,
                           values=data.values, covariate_builder=builder,
                           target_time=target_time)


def _ingest_from_config(parser) -> IngestResult:
    mapping = {key: _get(parser, "data", key, default=key)
               for key in ("x", "y", "time", "value")}
    path = _get(parser, "data", "file", required=True)
    transform = _get(parser, "data", "transform", default="identity")
    extra = ()
    terms = _split_list(_get(parser, "data", "covariates", default="intercept"))
    if "elevation" in terms:
        extra = (_get(parser, "data", "elevation_column", default="elevation"),)
    return ingest_csv(path, mapping, transform=transform, extra_columns=extra)


# ---------------------------------------------------------------------------
# artifact writers (all byte-deterministic)
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return repr(float(value))


def write_fit_report(path, params, beta_hat, diagnostics) -> None:
    lines = ["[parameters]"]
    spatial = params.spatial
    lines.append(f"family = "
                 f"{'matern' if isinstance(spatial, covariance.Matern) else 'exponential'}")
    lines.append(f"variance = {_fmt(spatial.variance)}")
    lines.append(f"range = {_fmt(spatial.range)}")
    if isinstance(spatial, covariance.Matern):
        lines.append(f"smoothness = {_fmt(spatial.smoothness)}")
    lines.append(f"rho = {_fmt(params.temporal.rho)}")
    if isinstance(params.nugget, covariance.ConstantNugget):
        lines.append(f"nugget_variance = {_fmt(params.nugget.variance)}")
    else:
        for epoch in sorted(params.nugget.variances):
            lines.append(f"nugget_variance.{epoch:g} = "
                         f"{_fmt(params.nugget.variances[epoch])}")
    lines.append("")
    lines.append("[trend]")
    for i, b in enumerate(beta_hat):
        lines.append(f"beta_{i} = {_fmt(b)}")
    lines.append("")
    lines.append("[diagnostics]")
    lines.append(f"evals = {diagnostics.evals}")
    lines.append(f"final_simplex_size = {_fmt(diagnostics.final_simplex_size)}")
    lines.append(f"converged = {str(diagnostics.converged).lower()}")
    lines.append(f"nll = {_fmt(diagnostics.nll)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_mask_csv(path, grid, z_hat, krig_sd, z_prime, classes) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ix", "iy", "cx", "cy", "z_hat", "krig_sd", "z_prime",
                         "region"])
        for j in range(grid.m):
            ix, iy = grid.indices[j]
            cx, cy = grid.centers[j]
            writer.writerow([int(ix), int(iy), _fmt(cx), _fmt(cy),
                             _fmt(z_hat[j]), _fmt(krig_sd[j]), _fmt(z_prime[j]),
                             classes[j]])


def read_mask_csv(path):
    """Re-ingest a mask CSV; floats round-trip exactly (repr formatting)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "ix": np.array([int(r["ix"]) for r in rows]),
        "iy": np.array([int(r["iy"]) for r in rows]),
        "cx": np.array([float(r["cx"]) for r in rows]),
        "cy": np.array([float(r["cy"]) for r in rows]),
        "z_hat": np.array([float(r["z_hat"]) for r in rows]),
        "krig_sd": np.array([float(r["krig_sd"]) for r in rows]),
        "z_prime": np.array([float(r["z_prime"]) for r in rows]),
        "region": np.array([r["region"] for r in rows], dtype=object),
    }


def emit_plot(grid, classes, path) -> None:
    """Self-contained SVG map: one rect per retained pixel plus a legend."""
    px = 10
    width = grid.nx * px
    height = grid.ny * px
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height + 40}" viewBox="0 0 {width} {height + 40}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff" '
        'stroke="#000000"/>',
    ]
    for j in range(grid.m):
        ix, iy = grid.indices[j]
        color = _REGION_COLORS[classes[j]]
        parts.append(f'<rect x="{int(ix) * px}" y="{(grid.ny - 1 - int(iy)) * px}" '
                     f'width="{px}" height="{px}" fill="{color}"/>')
    legend = [(CONFIDENT_EXCEED, "confident exceed"),
              (POSSIBLE_EXCEED, "possible exceed"),
              (CONFIDENT_NOT_EXCEED, "confident not exceed")]
    for i, (cls, label) in enumerate(legend):
        x = 5 + i * (width // 3)
        parts.append(f'<rect x="{x}" y="{height + 10}" width="12" height="12" '
                     f'fill="{_REGION_COLORS[cls]}" stroke="#000000"/>')
        parts.append(f'<text x="{x + 16}" y="{height + 20}" font-size="10" '
                     f'font-family="sans-serif">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def write_coverage_csv(path, results) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pattern", "phi", "rho", "nugget", "level", "coverage",
                         "se", "mean_region_px", "n_fail"])
        for res in results:
            cfg = res.config
            for level in cfg.levels:
                writer.writerow([cfg.pattern, _fmt(cfg.phi), _fmt(cfg.rho),
                                 _fmt(cfg.nugget), _fmt(level),
                                 _fmt(res.coverage[level]), _fmt(res.se[level]),
                                 _fmt(res.mean_region_px[level]), res.n_fail])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fit(config_path, workers: int = 1) -> int:
    parser = _read_ini(config_path)
    out = _output_dir(parser)
    data = _ingest_from_config(parser)
    builder = _covariate_builder(parser, data)
    dataset = _dataset_from_config(parser, data, builder)
    params, free = _model_from_config(parser)
    result = reml.fit(dataset, _fit_config(parser, params, free))
    write_fit_report(out / "fit_report.txt", result.params,
                     result.model.beta_hat, result.diagnostics)
    return 0


def cmd_exceed(config_path, workers: int = 1) -> int:
    parser = _read_ini(config_path)
    out = _output_dir(parser)
    data = _ingest_from_config(parser)
    grid = _grid_from_config(parser, data)
    builder = _covariate_builder(parser, data, grid=grid)
    dataset = _dataset_from_config(parser, data, builder)
    params, free = _model_from_config(parser)
    result = reml.fit(dataset, _fit_config(parser, params, free))
    write_fit_report(out / "fit_report.txt", result.params,
                     result.model.beta_hat, result.diagnostics)
    model = result.model

    tokens = _split_list(_get(parser, "exceed", "thresholds", required=True))
    if not tokens:
        raise ConfigError("[exceed] thresholds must list at least one value")
    try:
        thresholds = [(tok, float(tok)) for tok in tokens]
    except ValueError:
        raise ConfigError(f"[exceed] thresholds must be numbers, got {tokens!r}")
    alpha = _get_float(parser, "exceed", "alpha", required=True)
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"[exceed] alpha must lie in (0, 1), got {alpha}")
    b = _get_int(parser, "exceed", "b", required=True)
    if b < 100:
        raise ConfigError("[exceed] b must be at least 100 for analysis runs")
    seed = _get_int(parser, "exceed", "seed", required=True)
    direction_raw = _get(parser, "exceed", "direction", default="above").lower()
    if direction_raw not in ("above", "below"):
        raise ConfigError(f"[exceed] direction must be above or below")

    points = grid.points_at(dataset.target_time)
    predictions = kriging.uk_weight_matrix(model, points)
    ensemble = condsim.generate_ensemble(model, grid, b, seed, workers=workers,
                                         predictions=predictions)
    summary = ["[exceed]", f"b = {b}", f"seed = {seed}", f"alpha = {_fmt(alpha)}",
               f"direction = {direction_raw}", f"pixels = {grid.m}"]
    for token, u in thresholds:
        above, below = exceedance.combine_inferences(model, grid, ensemble, u,
                                                     alpha,
                                                     predictions=predictions)
        classes = exceedance.region_classes(above)
        _, z_hat, krig_sd = predictions
        write_mask_csv(out / f"mask_u{token}.csv", grid, z_hat, krig_sd,
                       above.z_prime, classes)
        emit_plot(grid, classes, out / f"region_u{token}.svg")
        summary.extend([
            f"threshold.{token}.c_alpha_above = {_fmt(above.c_alpha_hat)}",
            f"threshold.{token}.c_alpha_below = {_fmt(below.c_alpha_hat)}",
            f"threshold.{token}.n_empty_above = {above.n_empty_realizations}",
            f"threshold.{token}.confident_exceed_px = "
            f"{int(np.sum(classes == CONFIDENT_EXCEED))}",
            f"threshold.{token}.possible_exceed_px = "
            f"{int(np.sum(classes == POSSIBLE_EXCEED))}",
        ])
    (out / "exceed_report.txt").write_text("\n".join(summary) + "\n",
                                           encoding="utf-8")
    return 0


def cmd_simstudy(config_path, workers: int = 1) -> int:
    parser = _read_ini(config_path)
    out = _output_dir(parser)
    section = "simstudy"
    if not parser.has_section(section):
        raise ConfigError("missing [simstudy] section")
    levels_raw = _split_list(_get(parser, section, "levels", default="0.90, 0.95"))
    try:
        levels = tuple(float(v) for v in levels_raw)
    except ValueError:
        raise ConfigError(f"[simstudy] levels must be numbers, got {levels_raw!r}")
    times_raw = _split_list(_get(parser, section, "obs_times", default="1, 2, 3"))
    try:
        obs_times = tuple(float(v) for v in times_raw)
    except ValueError:
        raise ConfigError(f"[simstudy] obs_times must be numbers")
    try:
        config = simstudy.ExperimentConfig(
            pattern=_get(parser, section, "pattern", default="trend"),
            phi=_get_float(parser, section, "phi", required=True),
            rho=_get_float(parser, section, "rho", required=True),
            sigma2_w=_get_float(parser, section, "sigma2_w", default=1.0),
            nugget=_get_float(parser, section, "nugget", default=0.0),
            n_sites=_get_int(parser, section, "n_sites", default=100),
            obs_times=obs_times,
            target_time=_get_float(parser, section, "target_time", default=4.0),
            nx=_get_int(parser, section, "nx", default=25),
            ny=_get_int(parser, section, "ny", default=25),
            b=_get_int(parser, section, "b", default=500),
            levels=levels,
            n_replicates=_get_int(parser, section, "replicates", default=200),
            covariance_known=_get_bool(parser, section, "covariance_known",
                                       default=True),
            master_seed=_get_int(parser, section, "seed", required=True),
            full_scale=_get_bool(parser, section, "full_scale", default=False))
    except ValueError as err:
        raise ConfigError(str(err))
    result = simstudy.run_experiment(config, workers=workers)
    write_coverage_csv(out / "coverage.csv", [result])
    if _get_bool(parser, section, "emit_frequencies", default=False):
        grid = config.grid()
        for level in config.levels:
            freq_path = out / f"frequency_{level:g}.csv"
            with open(freq_path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["ix", "iy", "region_freq", "exceed_freq"])
                for j in range(grid.m):
                    writer.writerow([int(grid.indices[j][0]),
                                     int(grid.indices[j][1]),
                                     _fmt(result.region_freq[level][j]),
                                     _fmt(result.exceed_freq[j])])
    if not result.valid:
        raise exceedance.EmptyExceedanceDistributionError(
            f"experiment invalid: {result.n_fail} of {config.n_replicates} "
            "replicates failed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stexceed",
        description="Spatio-temporal exceedance confidence regions")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("fit", "REML-fit a model and report estimates"),
                            ("exceed", "build exceedance confidence regions"),
                            ("simstudy", "run a synthetic coverage experiment")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="INI config file")
        p.add_argument("--workers", type=int, default=1,
                       help="worker processes (never changes output bytes)")
    args = parser.parse_args(argv)
    commands = {"fit": cmd_fit, "exceed": cmd_exceed, "simstudy": cmd_simstudy}
    try:
        return commands[args.command](args.config, workers=args.workers)
    except ConfigError as err:
        _emit_error("config", err)
        return 2
    except DataError as err:
        _emit_error("data", err)
        return 3
    except reml.NonConvergenceError as err:
        _emit_error("nonconvergence", err)
        return 5
    except _NUMERIC_ERRORS as err:
        _emit_error("numeric", err)
        return 4


def _emit_error(kind: str, err: Exception) -> None:
    record = {"error": kind, "type": type(err).__name__, "message": str(err)}
    print(json.dumps(record), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
