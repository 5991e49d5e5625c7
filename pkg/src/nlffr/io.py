"""File formats: long-format curve CSV, JSON run configs, the model artifact and result tables."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .funcdata import ObservedCurve, RecoveredCurve, SmoothingChoice
from .kernels import TimeKernel
from .regression import FitConfig, FittedModel

MODEL_FORMAT = "nlffr-model"
MODEL_VERSION = 1
CSV_COLUMNS = ("subject_id", "variable", "t", "value")


class DataFormatError(ValueError):
    """Malformed input file; ``line`` is 1-based and counts the header."""

    def __init__(self, msg: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


def read_long_csv(path) -> dict[str, list[ObservedCurve]]:
    """Read ``subject_id,variable,t,value`` rows into curves keyed by variable."""
    rows: dict[str, dict[str, list]] = {"x": defaultdict(list), "y": defaultdict(list)}
    seen = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError("empty file", 1)
        header = [h.strip() for h in header]
        if sorted(header) != sorted(CSV_COLUMNS):
            raise DataFormatError(f"header must be {','.join(CSV_COLUMNS)}, got {','.join(header)}", 1)
        col = {name: header.index(name) for name in CSV_COLUMNS}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_COLUMNS):
                raise DataFormatError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}", lineno)
            sid = row[col["subject_id"]].strip()
            var = row[col["variable"]].strip().lower()
            if not sid:
                raise DataFormatError("empty subject_id", lineno)
            if var not in rows:
                raise DataFormatError(f"variable must be 'x' or 'y', got {var!r}", lineno)
            try:
                t = float(row[col["t"]])
                v = float(row[col["value"]])
            except ValueError:
                raise DataFormatError("t and value must be numbers", lineno) from None
            if not (math.isfinite(t) and 0.0 <= t <= 1.0):
                raise DataFormatError(f"t={row[col['t']].strip()} outside [0, 1]", lineno)
            if not math.isfinite(v):
                raise DataFormatError("value is not finite", lineno)
            key = (sid, var, t)
            if key in seen:
                raise DataFormatError(f"duplicate observation (also on line {seen[key]})", lineno)
            seen[key] = lineno
            rows[var][sid].append((t, v))
    out = {}
    for var, by_subject in rows.items():
        curves = []
        for sid, obs in by_subject.items():
            obs.sort()
            t, v = zip(*obs)
            curves.append(ObservedCurve(sid, np.array(t), np.array(v)))
        out[var] = curves
    return out


@dataclass
class RunConfig:
    """Fit options plus prediction defaults stored in the model artifact."""

    fit: FitConfig
    grid_size: int = 101
    alpha: float = 0.05
    n_paths: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.grid_size, int) and self.grid_size >= 2):
            raise ValueError("grid_size: must be an integer >= 2")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha: must be in (0, 1)")
        if not (isinstance(self.n_paths, int) and self.n_paths >= 100):
            raise ValueError("n_paths: must be an integer >= 100")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        fit_names = {f.name for f in fields(FitConfig)}
        run_names = {"grid_size", "alpha", "n_paths", "seed"}
        unknown = set(d) - fit_names - run_names
        if unknown:
            raise ValueError("unknown config fields: " + ", ".join(sorted(unknown)))
        fit_cfg = FitConfig(**{k: v for k, v in d.items() if k in fit_names})
        return cls(fit_cfg, **{k: v for k, v in d.items() if k in run_names})

    def prediction_defaults(self) -> dict:
        return {"grid_size": self.grid_size, "alpha": self.alpha, "n_paths": self.n_paths, "seed": self.seed}


def load_json(path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid JSON: {exc.msg}", exc.lineno) from None


def _curves_to_list(curves: Iterable[RecoveredCurve]) -> list:
    return [{"times": c.times.tolist(), "coeffs": c.coeffs.tolist()} for c in curves]


def _smoothing_to_dict(s: SmoothingChoice) -> dict:
    return {"kernel": s.kernel.to_dict(), "epsilon": s.epsilon, "gcv_score": s.gcv_score}


def model_to_dict(model: FittedModel, defaults: Optional[dict] = None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "subject_ids": [str(s) for s in model.subject_ids],
        "x_smoothing": _smoothing_to_dict(model.x_smoothing),
        "y_smoothing": _smoothing_to_dict(model.y_smoothing),
        "epsilon_x": model.epsilon_x,
        "gamma_x": model.gamma_x,
        "x_curves": _curves_to_list(model.x_curves),
        "y_curves": _curves_to_list(model.y_curves),
        "hx_gram": model.hx_gram.tolist(),
        "ky_inner": model.ky_inner.tolist(),
        "report": model.report,
        "prediction_defaults": defaults or {},
    }


def model_from_dict(d: dict) -> tuple[FittedModel, dict]:
    if d.get("format") != MODEL_FORMAT:
        raise DataFormatError(f"not a model artifact (format={d.get('format')!r})")
    if d.get("version") != MODEL_VERSION:
        raise DataFormatError(f"model format version {d.get('version')!r} is not supported (expected {MODEL_VERSION})")

    def smoothing(s):
        return SmoothingChoice(TimeKernel.from_dict(s["kernel"]), float(s["epsilon"]), float(s["gcv_score"]))

    xs, ys = smoothing(d["x_smoothing"]), smoothing(d["y_smoothing"])

    def curves(lst, s):
        return [RecoveredCurve(np.array(c["times"]), np.array(c["coeffs"]), s.kernel, s.epsilon) for c in lst]

    model = FittedModel(
        list(d["subject_ids"]),
        curves(d["x_curves"], xs),
        curves(d["y_curves"], ys),
        xs,
        ys,
        np.array(d["hx_gram"]),
        np.array(d["ky_inner"]),
        float(d["epsilon_x"]),
        float(d["gamma_x"]),
        d.get("report", {}),
    )
    return model, d.get("prediction_defaults", {})


def save_model(model: FittedModel, path, defaults: Optional[dict] = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, defaults), indent=1))


def load_model(path) -> tuple[FittedModel, dict]:
    return model_from_dict(load_json(path))


def _jsonable_scores(scores: dict) -> list:
    return [{"epsilon": k[0], "gamma": k[1], "score": v if math.isfinite(v) else None} for k, v in scores.items()]


def fit_report(model: FittedModel) -> dict:
    rep = dict(model.report)
    for key, choice in (("x_smoothing", model.x_smoothing), ("y_smoothing", model.y_smoothing)):
        rep[key] = dict(rep[key], grid_scores=_jsonable_scores(choice.scores))
    rep["regression"] = dict(rep["regression"], grid_scores=_jsonable_scores(model.regression_scores))
    return rep


PREDICTION_COLUMNS = ("subject_id", "t", "y_hat")


def write_csv(path_or_fh, header, rows) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])

    if hasattr(path_or_fh, "write"):
        _write(path_or_fh)
    else:
        with open(path_or_fh, "w", newline="") as fh:
            _write(fh)


SUMMARY_COLUMNS = (
    "model", "x_gen", "sigma", "fit_kernel", "design", "median", "IQR",
    "n_reps", "n_failed", "n_train", "n_test", "seed", "bmc_pairing", "band_coverage", "pointwise_coverage",
)
REP_COLUMNS = (
    "model", "x_gen", "sigma", "fit_kernel", "design", "seed", "rep",
    "ise_median", "failed", "epsilon_x", "gamma_x", "band_coverage", "pointwise_coverage", "error",
)


def summary_rows(results) -> list:
    rows = []
    for r in results:
        c = r.config
        rows.append([
            c.model, c.x_generator, float(c.sigma), c.fit_kernel, c.design, r.median, r.iqr,
            c.n_reps, r.n_failed, c.n_train, c.n_test, c.seed, c.bmc_pairing, r.band_coverage, r.pointwise_coverage,
        ])
    return rows


def replication_rows(results) -> list:
    rows = []
    for r in results:
        c = r.config
        for rep in r.replications:
            rows.append([
                c.model, c.x_generator, float(c.sigma), c.fit_kernel, c.design, c.seed, rep.rep,
                rep.ise_median, int(rep.failed), rep.epsilon_x, rep.gamma_x,
                rep.band_coverage, rep.pointwise_coverage, rep.error,
            ])
    return rows
