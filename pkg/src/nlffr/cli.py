"""Command-line entry point: ``nlffr fit | predict | simulate``."""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from .funcdata import CurveError, NumericalError
from .inference import DegenerateCovariatesError, bands_many
from .io import (
    PREDICTION_COLUMNS,
    REP_COLUMNS,
    SUMMARY_COLUMNS,
    DataFormatError,
    RunConfig,
    fit_report,
    load_json,
    load_model,
    read_long_csv,
    replication_rows,
    save_model,
    summary_rows,
    write_csv,
)
from .kernels import KernelError
from .regression import fit, predict_many
from .sim import ScenarioConfig, ScenarioFailure, run_scenario

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("nlffr")


def _fail(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _guarded(fn):
    """Map library exceptions onto the documented exit codes."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (NumericalError, ScenarioFailure, np.linalg.LinAlgError, DegenerateCovariatesError) as exc:
            _fail(EXIT_NUMERICAL, str(exc))
        except (DataFormatError, CurveError, KernelError, ValueError, TypeError, KeyError) as exc:
            _fail(EXIT_VALIDATION, str(exc))
        except OSError as exc:
            _fail(EXIT_IO, str(exc))

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Nonlinear function-on-function regression with nested kernel spaces."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command("fit")
@click.argument("data_path", type=click.Path(dir_okay=False))
@click.option("-c", "--config", "config_path", type=click.Path(dir_okay=False), help="JSON run config.")
@click.option("-o", "--model-out", required=True, type=click.Path(dir_okay=False))
@click.option("--report", "report_path", type=click.Path(dir_okay=False), help="Fit report (default: <model-out>.report.json).")
@_guarded
def cmd_fit(data_path, config_path, model_out, report_path):
    """Fit a model to long-format curve data with x and y rows."""
    cfg = RunConfig.from_dict(load_json(config_path) if config_path else {})
    curves = read_long_csv(data_path)
    model = fit(curves["x"], curves["y"], cfg.fit)
    save_model(model, model_out, cfg.prediction_defaults())
    report_path = report_path or str(model_out) + ".report.json"
    Path(report_path).write_text(json.dumps(fit_report(model), indent=1))
    r = model.report["regression"]
    log.info("fitted n=%d eps_x=%g gamma_x=%g", model.n, r["epsilon_x"], r["gamma_x"])


@main.command("predict")
@click.argument("model_path", type=click.Path(dir_okay=False))
@click.argument("newx_path", type=click.Path(dir_okay=False))
@click.option("--grid-size", type=int, default=None, help="Equispaced points on [0, 1].")
@click.option("--alpha", type=float, default=None)
@click.option("--pointwise", is_flag=True, help="Add pointwise interval columns.")
@click.option("--band", is_flag=True, help="Add simultaneous band columns.")
@click.option("--n-paths", type=int, default=None, help="Gaussian paths for the band quantile.")
@click.option("--seed", type=int, default=None)
@click.option("-o", "--out", "out_path", type=click.Path(dir_okay=False), help="Output CSV (default stdout).")
@_guarded
def cmd_predict(model_path, newx_path, grid_size, alpha, pointwise, band, n_paths, seed, out_path):
    """Predict response curves for the x rows of NEWX_PATH."""
    model, defaults = load_model(model_path)
    grid_size = grid_size or defaults.get("grid_size", 101)
    alpha = alpha if alpha is not None else defaults.get("alpha", 0.05)
    n_paths = n_paths or defaults.get("n_paths", 10_000)
    seed = seed if seed is not None else defaults.get("seed", 0)
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if grid_size < 2:
        raise ValueError("grid-size must be at least 2")
    x0 = read_long_csv(newx_path)["x"]
    if not x0:
        raise DataFormatError("no x observations in the new-covariate file")
    grid = np.linspace(0.0, 1.0, grid_size)
    header = list(PREDICTION_COLUMNS)
    if pointwise:
        header += ["pw_lo", "pw_hi"]
    if band:
        header += ["band_lo", "band_hi"]
    if pointwise or band:
        results = bands_many(model, x0, grid, alpha, n_paths, seed)
        centers = [r.center for r in results]
    else:
        centers = list(predict_many(model, x0, grid))
    rows = []
    for k, curve in enumerate(x0):
        for i, t in enumerate(grid):
            row = [curve.subject_id, float(t), float(centers[k][i])]
            if pointwise:
                lo, hi = results[k].pointwise
                row += [float(lo[i]), float(hi[i])]
            if band:
                lo, hi = results[k].band
                row += [float(lo[i]), float(hi[i])]
            rows.append(row)
    write_csv(out_path or sys.stdout, header, rows)


@main.command("simulate")
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("-o", "--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--threads", type=int, default=None, help="Worker threads (default: all cores).")
@_guarded
def cmd_simulate(config_path, out_path, threads):
    """Run simulation scenarios; writes a summary table and <out>_reps.csv."""
    raw = load_json(config_path)
    specs = raw["scenarios"] if isinstance(raw, dict) and "scenarios" in raw else raw
    specs = specs if isinstance(specs, list) else [specs]
    configs = [ScenarioConfig.from_dict(s) for s in specs]
    threads = threads or os.cpu_count() or 1
    results = []
    for cfg in configs:
        log.info("running %s", cfg)
        results.append(run_scenario(cfg, threads=threads))
    out = Path(out_path)
    write_csv(out, SUMMARY_COLUMNS, summary_rows(results))
    write_csv(out.with_name(out.stem + "_reps" + out.suffix), REP_COLUMNS, replication_rows(results))


if __name__ == "__main__":  # pragma: no cover
    main()
