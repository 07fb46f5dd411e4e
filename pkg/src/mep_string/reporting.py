"""Serialization of run reports, traces, study tables and plot data."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict

import numpy as np

from .experiments import StabilityTrace, StudyRow, StudyTable
from .geometry import Polyline, StringOfImages
from .potential import CriticalPointClass
from .solver import IterationRecord, RunReport, SolverConfig, Termination

SCHEMA_VERSION = 1

TRACE_COLUMNS = (
    "step",
    "sim_time",
    "spacing",
    "total_length",
    "n_images",
    "reparametrized",
    "images_added",
    "residual",
    "d_to_reference",
)

STUDY_COLUMNS = (
    "h", "dt", "scheme", "N_final", "steps_to_settle", "error_dH", "residual",
    "termination", "barrier", "status",
)


def _num(v):
    """Float for JSON; non-finite values become null."""
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def report_to_dict(report: RunReport) -> dict:
    # json writes floats with repr, the shortest string that round-trips
    return {
        "schema_version": SCHEMA_VERSION,
        "potential": report.potential,
        "config": None if report.config is None else report.config.to_dict(),
        "termination": report.termination.value,
        "message": report.message,
        "lipschitz": _num(report.lipschitz),
        "tau": _num(report.tau),
        "settling_step": report.settling_step,
        "saddle": None if report.saddle is None else [float(v) for v in report.saddle],
        "saddle_class": None if report.saddle_class is None else report.saddle_class.to_dict(),
        "barrier": _num(report.barrier),
        "final_string": report.final_string.to_record(),
        "iterations": [
            {k: (_num(v) if isinstance(v, float) else v) for k, v in asdict(r).items()}
            for r in report.iterations
        ],
    }


def _nan(v):
    return float("nan") if v is None else v


def report_from_dict(d: dict) -> RunReport:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {d.get('schema_version')}")
    iters = []
    for r in d["iterations"]:
        r = dict(r)
        r["advanced_spacing"] = _nan(r.get("advanced_spacing"))
        r["residual"] = _nan(r["residual"])
        iters.append(IterationRecord(**r))
    return RunReport(
        final_string=StringOfImages.from_record(d["final_string"]),
        iterations=iters,
        saddle=None if d["saddle"] is None else np.array(d["saddle"]),
        saddle_class=None if d["saddle_class"] is None else CriticalPointClass.from_dict(d["saddle_class"]),
        barrier=d["barrier"],
        termination=Termination(d["termination"]),
        config=None if d["config"] is None else SolverConfig.from_dict(d["config"]),
        potential=d["potential"],
        lipschitz=_nan(d["lipschitz"]),
        tau=_nan(d["tau"]),
        settling_step=d["settling_step"],
        message=d["message"],
    )


def write_trace(iterations, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in iterations:
            w.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])


def read_trace(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append(IterationRecord(
            step=int(r["step"]),
            sim_time=float(r["sim_time"]),
            spacing=float(r["spacing"]),
            total_length=float(r["total_length"]),
            n_images=int(r["n_images"]),
            reparametrized=r["reparametrized"] == "1",
            images_added=r["images_added"] == "1",
            residual=float(r["residual"]),
            d_to_reference=float(r["d_to_reference"]) if r["d_to_reference"] else None,
        ))
    return out


def emit_report(report: RunReport, fmt: str, path):
    """Write a run report as JSON (full record) or CSV (iteration trace)."""
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(report_to_dict(report), fh, indent=1)
            fh.write("\n")
    elif fmt == "csv":
        write_trace(report.iterations, path)
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def load_report(path) -> RunReport:
    with open(path) as fh:
        return report_from_dict(json.load(fh))


def write_study_table(table: StudyTable, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STUDY_COLUMNS)
        for r in table.rows:
            w.writerow([_fmt(getattr(r, c)) for c in STUDY_COLUMNS])


def read_study_table(path) -> StudyTable:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append(StudyRow(
            h=float(r["h"]), dt=float(r["dt"]), scheme=r["scheme"],
            N_final=int(r["N_final"]), steps_to_settle=int(r["steps_to_settle"]),
            error_dH=float(r["error_dH"]), residual=float(r["residual"]),
            termination=r["termination"],
            barrier=float(r["barrier"]) if r["barrier"] else None,
            status=r["status"],
        ))
    return StudyTable(out)


# ---------------------------------------------------------------------------
# long-format plot data: one (series, x, y) triple per row


def _plot_rows(obj, reference=None):
    if isinstance(obj, RunReport):
        for r in obj.iterations:
            yield "residual", r.step, r.residual
        for r in obj.iterations:
            yield "spacing", r.step, r.spacing
        for v in obj.final_string.images:
            yield "final_string", v[0], v[1] if len(v) > 1 else 0.0
    elif isinstance(obj, StudyTable):
        for r in sorted(obj.rows, key=lambda r: (r.scheme, r.dt, r.h)):
            yield f"error_dH dt={r.dt:g} {r.scheme}", r.h, r.error_dH
        ref = obj.reference.get("vertices")
        if ref is not None and reference is None:
            reference = Polyline(ref)
    elif isinstance(obj, StabilityTrace):
        for t, d in zip(obj.times, obj.d_H_values):
            yield "d_H", t, d
    elif isinstance(obj, list):
        # one-sided lemma probe rows
        for row in obj:
            yield "max_d_M_phi", row["eta"], row["max_d_M_phi"]
            yield "max_d_phi_M", row["eta"], row["max_d_phi_M"]
    else:
        raise TypeError(f"no plot data for {type(obj).__name__}")
    if reference is not None:
        for v in reference.vertices:
            yield "reference", v[0], v[1] if len(v) > 1 else 0.0


def emit_plotdata(obj, path, reference: Polyline = None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("series", "x", "y"))
        for series, x, y in _plot_rows(obj, reference):
            w.writerow((series, _fmt(float(x)), _fmt(float(y))))
