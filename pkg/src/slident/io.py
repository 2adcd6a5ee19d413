"""File formats: JSON documents, CSV tables and provenance headers.

Every writer takes an optional ``prov`` dict (see :func:`provenance`). JSON
documents carry it under a ``"provenance"`` key; CSV files carry it as
leading ``#`` comment lines, which the readers skip.
"""

import csv
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import PredictorEstimate
from .likelihood import HyperState
from .model import GroundTruthModel, TimeSeries

FLOAT_FMT = "%.17g"


def config_hash(config):
    """Short sha256 of the canonical JSON form of a config mapping."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(config, seed=None):
    return {
        "config_hash": config_hash(config),
        "seed": seed,
        "version": __version__,
        # results are reproducible bit for bit only on the same platform and library stack
        "platform": f"{platform.machine()}-{platform.system()}",
        "numpy": np.__version__,
    }


def _comment_lines(prov):
    if not prov:
        return []
    return [f"# {k}={prov[k]}" for k in sorted(prov)]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path, doc, prov=None):
    doc = dict(doc)
    if prov:
        doc["provenance"] = prov
    Path(path).write_text(json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _read_csv_rows(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.reader(lines))


def write_csv(path, header, rows, prov=None):
    with open(path, "w", newline="") as fh:
        for ln in _comment_lines(prov):
            fh.write(ln + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([FLOAT_FMT % v if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv_dicts(path):
    rows = _read_csv_rows(path)
    return [dict(zip(rows[0], r)) for r in rows[1:]]


# models and data

def save_model(path, model, prov=None):
    write_json(path, model.to_dict(), prov)


def load_model(path):
    return GroundTruthModel.from_dict(read_json(path))


def save_timeseries(path, ts, prov=None):
    Y = ts.values
    header = ["t"] + [f"y{i + 1}" for i in range(Y.shape[1])]
    write_csv(path, header, ([t + 1] + [float(v) for v in row] for t, row in enumerate(Y)), prov)


def load_timeseries(path):
    rows = _read_csv_rows(path)
    header = rows[0]
    if not header or header[0] != "t" or header[1:] != [f"y{i + 1}" for i in range(len(header) - 1)]:
        raise ValueError(f"{path}: expected header t,y1,...,ym")
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    seed = None
    with open(path) as fh:
        for ln in fh:
            if not ln.startswith("#"):
                break
            key, _, val = ln[1:].strip().partition("=")
            if key == "seed" and val not in ("", "None"):
                seed = int(val)
    return TimeSeries(values.reshape(len(rows) - 1, len(header) - 1), seed=seed)


# estimates

def save_estimate(path, estimate, prov=None):
    write_json(path, estimate.to_dict(), prov)


def load_estimate(path):
    return PredictorEstimate.from_dict(read_json(path))


def save_coefficients_csv(path, estimate, prov=None):
    """Lag-major table: one row per (lag, i, j) with the S, L and total coefficients."""
    S, L = estimate.S_coeffs(), estimate.L_coeffs()
    T, m, _ = S.shape
    rows = ([k + 1, i + 1, j + 1, float(S[k, i, j]), float(L[k, i, j]), float(S[k, i, j] + L[k, i, j])]
            for k in range(T) for i in range(m) for j in range(m))
    write_csv(path, ["lag", "i", "j", "s", "l", "g"], rows, prov)


def save_hyper(path, hyper, prov=None):
    write_json(path, hyper.to_dict(), prov)


def load_hyper(path):
    return HyperState.from_dict(read_json(path))


def save_report(path, report, prov=None):
    write_json(path, report.to_dict(), prov)


def save_trace_csv(path, trace, prov=None):
    rows = ([t["iter"], float(t["objective"]), float(t["step"]), float(t["kkt"])] for t in trace)
    write_csv(path, ["iter", "objective", "step", "kkt_residual"], rows, prov)


def save_regressor_csv(path, reg):
    """Dense Phi for cross-checking against other implementations; small problems only."""
    Phi = reg.dense()
    write_csv(path, [f"c{k}" for k in range(Phi.shape[1])], (list(map(float, r)) for r in Phi))


def save_network(path, graph, fmt, prov=None):
    from .metrics import export_network

    doc, dot = export_network(graph)
    if fmt == "json":
        write_json(path, doc, prov)
    elif fmt == "dot":
        head = "".join(f"// {ln[2:]}\n" for ln in _comment_lines(prov))
        Path(path).write_text(head + dot)
    elif fmt == "csv":
        rows = [[e["source"], e["target"], e["type"]] for e in doc["edges"]]
        write_csv(path, ["source", "target", "type"], rows, prov)
    else:
        raise ValueError(f"unknown network format {fmt!r}")
