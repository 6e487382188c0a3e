"""CSV ingestion and report serialization.

Reports are written as JSON objects carrying ``schema_version`` and ``kind``
(the report class name); :func:`load_report` reverses :func:`emit_report`.
Arrays are stored as nested lists. NaN entries (failed tuning-grid cells) are
written as the JSON token ``NaN``, which Python's json module reads back.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import fields, is_dataclass

import numpy as np

from .data import RegressionData
from .errors import InputError, IoError, NonNumeric, ParseError, TooFewRows
from .estimator import CovCurve
from .longmemory import STATISTICS, LmTestReport
from .simulate import MonteCarloReport
from .structural import TestReport
from .tuning import TuningGrid, TuningSelection

SCHEMA_VERSION = 1
MIN_ROWS = 50
FORMATS = ("json", "csv")


# ------------------------------------------------------------------ ingestion


def _parse_rows(lines, source: str):
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{source}: empty file", row=1) from None
    header = [h.strip() for h in header]
    if len(header) < 1 or not header[0]:
        raise ParseError(f"{source}: missing header", row=1)
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{source}: row {line_no} has {len(row)} fields, header has "
                             f"{len(header)}", row=line_no)
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise NonNumeric(f"{source}: row {line_no}, column {col} ({header[col - 1]!r}): "
                                 f"cannot parse {cell!r} as a number", row=line_no,
                                 col=col) from None
            if not math.isfinite(v):
                raise NonNumeric(f"{source}: row {line_no}, column {col} ({header[col - 1]!r}): "
                                 f"non-finite value {cell!r}", row=line_no, col=col)
            vals.append(v)
        rows.append(vals)
    return header, rows


def ingest_csv(path) -> RegressionData:
    """Read y (first column) and covariates (remaining columns) from a headed CSV.

    An intercept column is prepended unless some covariate column is already
    identically 1.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header, rows = _parse_rows(fh, str(path))
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 ({exc.reason})") from None
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None
    if len(rows) < MIN_ROWS:
        raise TooFewRows(f"{path}: {len(rows)} data rows, need at least {MIN_ROWS}")
    A = np.array(rows, dtype=float)
    covariates = A[:, 1:] if A.shape[1] > 1 else None
    return RegressionData.from_arrays(A[:, 0], covariates)


# -------------------------------------------------------------- serialization


def _plain(obj):
    """Recursively convert numpy containers and scalars into JSON-ready objects."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def report_to_dict(report) -> dict:
    kind = type(report).__name__
    if isinstance(report, TestReport):
        body = _plain(report)
        body["reject_at"] = {repr(float(k)): v for k, v in report.reject_at.items()}
    elif isinstance(report, LmTestReport):
        body = _plain(report)
        body["p_values"] = {k: report.p_values[k] for k in STATISTICS}
    elif isinstance(report, MonteCarloReport):
        body = _plain(report)
    elif isinstance(report, TuningSelection):
        body = _plain(report)
    elif isinstance(report, CovCurve):
        body = {"values": report.values.tolist(), "m": report.m, "tau": report.tau,
                "estimator": report.estimator, "t": report.t.tolist()}
    elif isinstance(report, dict):
        kind, body = "Result", _plain(report)
    else:
        raise InputError(f"cannot serialize {kind}")
    return {"schema_version": SCHEMA_VERSION, "kind": kind, **body}


def report_from_dict(doc: dict):
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {doc.get('schema_version')!r}")
    kind = doc.get("kind")
    body = {k: v for k, v in doc.items() if k not in ("schema_version", "kind")}
    if kind == "TestReport":
        return TestReport(statistic=body["statistic"],
                          bootstrap_draws=np.asarray(body["bootstrap_draws"], dtype=float),
                          p_value=body["p_value"],
                          reject_at={float(k): v for k, v in body["reject_at"].items()},
                          tuning=body["tuning"])
    if kind == "LmTestReport":
        stats = {k: {**v, "bootstrap_draws": np.asarray(v["bootstrap_draws"], dtype=float)}
                 for k, v in body["statistics"].items()}
        return LmTestReport(statistics=stats, tuning=body["tuning"], levels=tuple(body["levels"]))
    if kind == "MonteCarloReport":
        return MonteCarloReport(test=body["test"], replications=body["replications"],
                                levels=tuple(body["levels"]), cells=body["cells"],
                                rates=body["rates"], p_values=body["p_values"],
                                base_seed=body["base_seed"], config=body["config"])
    if kind == "TuningSelection":
        g = body["grid"]
        return TuningSelection(m_star=body["m_star"], tau_star=body["tau_star"],
                               mv_table=np.asarray(body["mv_table"], dtype=float),
                               s2_table=np.asarray(body["s2_table"], dtype=float),
                               grid=TuningGrid(tuple(g["m_values"]), tuple(g["tau_values"])),
                               criterion=body["criterion"])
    if kind == "CovCurve":
        return CovCurve(np.asarray(body["values"], dtype=float), body["m"], body["tau"],
                        body.get("estimator"))
    if kind == "Result":
        return body
    raise ParseError(f"unknown report kind {kind!r}")


def _csv_rows(report):
    """Header and rows of the tidy CSV form of a report."""
    if isinstance(report, MonteCarloReport):
        head = ["cell", "scenario", "n", "delta_or_d", "statistic", "level", "rate", "ci"]
        return head, [[row[k] for k in head] for row in report.rates]
    if isinstance(report, CovCurve):
        p = report.values.shape[1]
        head = ["t"] + [f"s{a + 1}{b + 1}" for a in range(p) for b in range(p)]
        flat = report.values.reshape(report.n, p * p)
        return head, [[t, *r] for t, r in zip(report.t.tolist(), flat.tolist())]
    if isinstance(report, TestReport):
        head = ["statistic", "value", "p_value"] + [f"reject_{a:g}" for a in report.reject_at]
        return head, [["T_n", report.statistic, report.p_value, *report.reject_at.values()]]
    if isinstance(report, LmTestReport):
        head = ["statistic", "value", "p_value"]
        return head, [[k, report.statistics[k]["value"], report.statistics[k]["p_value"]]
                      for k in STATISTICS]
    if isinstance(report, TuningSelection):
        head = ["m", "tau", "s2", "mv", "selected"]
        rows = []
        for i, m in enumerate(report.grid.m_values):
            for j, tau in enumerate(report.grid.tau_values):
                rows.append([m, tau, float(report.s2_table[i, j]), float(report.mv_table[i, j]),
                             int(m == report.m_star and tau == report.tau_star)])
        return head, rows
    if isinstance(report, dict) and "points" in report:
        pts = report["points"]
        head = ["m", "log_m", "mean_log_norm"]
        return head, [list(r) for r in zip(pts["m"], pts["log_m"], pts["mean_log_norm"])]
    raise InputError(f"no CSV form for {type(report).__name__}")


def render(report, format: str = "json") -> str:
    if format == "json":
        return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
    if format == "csv":
        head, rows = _csv_rows(report)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(head)
        writer.writerows(rows)
        return buf.getvalue()
    raise InputError(f"format must be one of {FORMATS}")


def emit_report(report, format: str = "json", path=None) -> None:
    """Write ``report`` to ``path`` (stdout when None or "-")."""
    text = render(report, format)
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from None


def load_report(path):
    """Inverse of ``emit_report(..., "json", path)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", row=exc.lineno, col=exc.colno) from None
    return report_from_dict(doc)
