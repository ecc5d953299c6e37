"""Model files, reports, data ingestion, and network export.

One JSON document format (versioned via ``format_version``) covers both
model declarations and result reports.  Matrix entries are encoded as a
plain number when fixed and as ``{"start": x, "label": ...}`` when free,
so a parsed file reproduces the declared model exactly.
"""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import (MalformedFile, MissingN, MissingValues, NoNetworkInReport,
                     NonSymmetric)
from .matrices import MatrixSpec
from .models import ModelSpec
from .params import ParameterMap, SampleMoments
from .simulate import moments_from_raw

FORMAT_VERSION = 1

#: covariance-file symmetry tolerance
INGEST_SYMMETRY_TOL = 1e-8

#: relative eigenvalue threshold for the rank warning on raw data
RANK_WARN_TOL = 1e-12

_MISSING_TOKENS = {"", "na", "nan", "n/a", "null", "none", "."}


# -- matrix and model documents -----------------------------------------------------


def _matrix_to_doc(mspec):
    entries = []
    for i in range(mspec.rows):
        row = []
        for j in range(mspec.cols):
            if mspec.free[i, j]:
                cell = {"start": float(mspec.values[i, j])}
                if mspec.labels[i, j] is not None:
                    cell["label"] = str(mspec.labels[i, j])
                row.append(cell)
            else:
                row.append(float(mspec.values[i, j]))
        entries.append(row)
    return {"rows": mspec.rows, "cols": mspec.cols,
            "symmetry": mspec.symmetry, "entries": entries}


def _matrix_from_doc(doc, where):
    try:
        rows, cols = int(doc["rows"]), int(doc["cols"])
        entries = doc["entries"]
        symmetry = doc.get("symmetry", "none")
    except (KeyError, TypeError, ValueError) as err:
        raise MalformedFile(f"bad matrix block in {where}: {err}") from None
    free = np.zeros((rows, cols), dtype=bool)
    values = np.zeros((rows, cols))
    labels = np.full((rows, cols), None, dtype=object)
    if len(entries) != rows:
        raise MalformedFile(f"{where}: expected {rows} entry rows")
    for i, row in enumerate(entries):
        if len(row) != cols:
            raise MalformedFile(f"{where}: row {i + 1} has {len(row)} entries")
        for j, cell in enumerate(row):
            if isinstance(cell, dict):
                free[i, j] = True
                values[i, j] = float(cell.get("start", 0.0))
                labels[i, j] = cell.get("label")
            elif isinstance(cell, (int, float)) and not isinstance(cell, bool):
                values[i, j] = float(cell)
            else:
                raise MalformedFile(f"{where}: entry ({i + 1},{j + 1}) must be "
                                    "a number or a free-parameter object")
    try:
        return MatrixSpec(free, values, symmetry, labels)
    except Exception as err:
        raise MalformedFile(f"{where}: {err}") from None


def _part_to_doc(spec, mode, names):
    doc = {"mode": mode}
    if mode == "covariance":
        doc["matrix"] = _matrix_to_doc(spec.matrix(names[0]))
    else:
        doc["omega"] = _matrix_to_doc(spec.matrix(names[0]))
        doc["delta"] = _matrix_to_doc(spec.matrix(names[1]))
    return doc


def model_to_doc(spec):
    """JSON-ready document for a model."""
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "model",
        "variables": list(spec.var_names),
        "latents": list(spec.latent_names),
        "lambda": _matrix_to_doc(spec.lambda_),
        "beta": _matrix_to_doc(spec.beta) if spec.beta is not None else None,
        "psi": _part_to_doc(spec, spec.psi_mode,
                            ("psi",) if spec.psi_mode == "covariance"
                            else ("omega_psi", "delta_psi")),
        "theta": _part_to_doc(spec, spec.theta_mode,
                              ("theta",) if spec.theta_mode == "covariance"
                              else ("omega_theta", "delta_theta")),
    }
    return doc


def model_from_doc(doc):
    """Parse a model document back into a ModelSpec."""
    if not isinstance(doc, dict) or doc.get("kind") != "model":
        raise MalformedFile("not a model document")
    if doc.get("format_version") != FORMAT_VERSION:
        raise MalformedFile(f"unsupported format_version: "
                            f"{doc.get('format_version')!r}")
    try:
        variables = [str(v) for v in doc["variables"]]
        latents = [str(v) for v in doc.get("latents", [])]
    except (KeyError, TypeError) as err:
        raise MalformedFile(f"bad variable declaration: {err}") from None
    p, m = len(variables), len(latents)
    kwargs = {"p": p, "m": m, "var_names": tuple(variables),
              "latent_names": tuple(latents)}
    kwargs["lambda_"] = _matrix_from_doc(doc["lambda"], "lambda") \
        if doc.get("lambda") is not None else None
    if doc.get("beta") is not None:
        kwargs["beta"] = _matrix_from_doc(doc["beta"], "beta")
    for part, plain, omega, delta in (("psi", "psi", "omega_psi", "delta_psi"),
                                      ("theta", "theta", "omega_theta", "delta_theta")):
        block = doc.get(part)
        if not isinstance(block, dict) or "mode" not in block:
            raise MalformedFile(f"missing {part} block")
        kwargs[f"{part}_mode"] = block["mode"]
        if block["mode"] == "covariance":
            kwargs[plain] = _matrix_from_doc(block["matrix"], plain)
        elif block["mode"] == "network":
            kwargs[omega] = _matrix_from_doc(block["omega"], omega)
            kwargs[delta] = _matrix_from_doc(block["delta"], delta)
        else:
            raise MalformedFile(f"unknown {part} mode: {block['mode']!r}")
    try:
        return ModelSpec(**kwargs)
    except Exception as err:
        raise MalformedFile(f"invalid model: {err}") from None


def save_model(spec, path):
    Path(path).write_text(json.dumps(model_to_doc(spec), indent=2) + "\n")


def load_model(path):
    return model_from_doc(_load_json(path))


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as err:
        raise MalformedFile(f"cannot read {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise MalformedFile(f"{path} is not valid JSON: {err}") from None


# -- reports ------------------------------------------------------------------------


def _grid(arr):
    return [[float(v) for v in row] for row in np.asarray(arr)]


def fit_to_doc(result, measures=None):
    """Estimate block of a report: matrices, labeled slots, diagnostics."""
    pmap = result.params.index
    mats = result.params.to_matrices()
    parameters = [
        {"matrix": name, "row": i + 1, "col": j + 1, "label": label,
         "value": float(value)}
        for (name, i, j), label, value in zip(pmap.slots, pmap.labels(),
                                              result.params.values)
    ]
    doc = {
        "estimates": {name: _grid(mat) for name, mat in mats.items()},
        "implied_covariance": _grid(result.implied),
        "parameters": parameters,
        "fit": {
            "f_min": float(result.f_min),
            "objective": float(result.objective),
            "converged": bool(result.converged),
            "iterations": int(result.iterations),
            "gradient_norm": float(result.gradient_norm),
            "admissible": bool(result.admissible),
            "k": int(result.k),
        },
    }
    if measures is not None:
        doc["fit_measures"] = {key: (None if value is None else
                                     (float(value) if isinstance(value, (int, float))
                                      and key != "df" and key != "k" and key != "n"
                                      else value))
                               for key, value in vars(measures).items()}
    return doc


def build_report(spec, result=None, measures=None, search=None, lasso=None,
                 warnings=(), provenance=None):
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "report",
        "model": model_to_doc(spec),
        "warnings": list(warnings),
        "provenance": provenance or {},
    }
    if result is not None:
        doc.update(fit_to_doc(result, measures))
    if search is not None:
        doc["search"] = search
    if lasso is not None:
        doc["lasso"] = lasso
    return doc


def save_report(doc, path):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_report(path):
    doc = _load_json(path)
    if not isinstance(doc, dict) or doc.get("kind") != "report":
        raise MalformedFile(f"{path} is not a report document")
    return doc


def search_trace_to_doc(trace):
    return {
        "criterion": trace.criterion,
        "initial_edges": sorted(list(e) for e in trace.initial_edges),
        "final_edges": sorted(list(e) for e in trace.final_edges),
        "steps": [{"action": s.action, "edge": list(s.edge),
                   "criterion_value": float(s.criterion_value),
                   "accepted": bool(s.accepted)} for s in trace.steps],
        "failures": [{"action": a, "edge": list(e), "reason": r}
                     for a, e, r in trace.failures],
        "n_fits": trace.n_fits,
    }


def lasso_result_to_doc(result):
    return {
        "criterion": result.criterion,
        "best_nu": float(result.best_nu),
        "selected_edges": sorted(list(e) for e in result.selected),
        "path": [{"nu": float(r.nu), "usable": bool(r.usable),
                  "n_selected": int(r.n_selected),
                  "aic": _num(r.aic), "bic": _num(r.bic), "ebic": _num(r.ebic),
                  "f_min": _num(r.f_min)} for r in result.path],
    }


def _num(value):
    value = float(value)
    return None if np.isnan(value) else value


# -- data ingestion -----------------------------------------------------------------


def _read_csv(path):
    try:
        with open(path, newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as err:
        raise MalformedFile(f"cannot read {path}: {err}") from None
    rows = [row for row in rows if row and any(cell.strip() for cell in row)]
    if len(rows) < 2:
        raise MalformedFile(f"{path}: need a header row and at least one data row")
    header = [cell.strip() for cell in rows[0]]
    width = len(header)
    data = np.empty((len(rows) - 1, width))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise MalformedFile(f"{path}: line {r} has {len(row)} cells, "
                                f"expected {width}")
        for c, cell in enumerate(row):
            text = cell.strip()
            if text.lower() in _MISSING_TOKENS:
                raise MissingValues(f"{path}: missing value at line {r}, "
                                    f"column {header[c]!r}; complete data required")
            try:
                data[r - 2, c] = float(text)
            except ValueError:
                raise MalformedFile(f"{path}: non-numeric cell {text!r} at "
                                    f"line {r}") from None
    return header, data


def ingest_data(path, kind="raw", n=None):
    """Read raw data or a covariance matrix into sample moments.

    Raw CSV input is column-centered and S uses the (N - 1) divisor.
    Covariance input needs an explicit sample size and must be symmetric
    within 1e-8.  Returns ``(moments, warnings)``; degenerate (singular)
    raw data is accepted here with a rank warning and fails later, at
    fit time.
    """
    header, data = _read_csv(path)
    warnings = []
    if kind == "raw":
        if data.shape[0] < 2:
            raise MalformedFile(f"{path}: need at least 2 observations")
        moments = moments_from_raw(data, labels=header)
        eigs = np.linalg.eigvalsh(moments.s)
        if eigs[0] <= RANK_WARN_TOL * max(eigs[-1], 1.0):
            warnings.append("sample covariance matrix is singular "
                            "(rank-deficient data)")
    elif kind == "covariance":
        if n is None:
            raise MissingN("covariance input requires an explicit sample size")
        if data.shape[0] != data.shape[1]:
            raise MalformedFile(f"{path}: covariance matrix must be square")
        asym = float(np.max(np.abs(data - data.T), initial=0.0))
        if asym > INGEST_SYMMETRY_TOL:
            raise NonSymmetric(f"{path}: matrix asymmetric by {asym:.3g} "
                               f"(tolerance {INGEST_SYMMETRY_TOL:g})")
        moments = SampleMoments(s=(data + data.T) / 2.0, n=int(n), labels=header)
    else:
        raise MalformedFile(f"unknown data kind: {kind!r}")
    return moments, warnings


def data_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_raw_csv(y, labels, path):
    """Write raw data with full float precision (lossless round trip)."""
    y = np.asarray(y, dtype=float)
    lines = [",".join(labels)]
    for row in y:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# -- network export -----------------------------------------------------------------


def export_network(report, fmt="edge-list", which=None, epsilon=1e-4):
    """Weighted edge list (or dot-like text) from a report's network estimate.

    Weights are partial correlations; entries at or below epsilon are
    omitted.  ``which`` picks ``omega_theta`` or ``omega_psi`` when both
    are present (residual network preferred by default).
    """
    estimates = report.get("estimates", {})
    candidates = [name for name in ("omega_theta", "omega_psi") if name in estimates]
    if which is not None:
        if which not in estimates:
            raise NoNetworkInReport(f"report has no {which} estimate")
        name = which
    elif candidates:
        name = candidates[0]
    else:
        raise NoNetworkInReport("report contains no network estimate")
    omega = np.asarray(estimates[name], dtype=float)
    model = report.get("model", {})
    labels = model.get("variables") if name == "omega_theta" \
        else model.get("latents")
    if not labels or len(labels) != omega.shape[0]:
        labels = [f"v{i + 1}" for i in range(omega.shape[0])]
    edges = [(labels[i], labels[j], omega[i, j])
             for i in range(omega.shape[0])
             for j in range(i + 1, omega.shape[0])
             if abs(omega[i, j]) > epsilon]
    if fmt == "edge-list":
        return "".join(f"{a} {b} {w:.6g}\n" for a, b, w in edges)
    if fmt == "dot":
        body = "".join(f'  "{a}" -- "{b}" [weight={w:.6g}];\n' for a, b, w in edges)
        return "graph network {\n" + body + "}\n"
    raise MalformedFile(f"unknown export format: {fmt!r}")
