"""JSON model files and CSV data formats used by the command line.

Model schemas, dispatched on the "kind" field:

    {"kind": "genab0",     "beta": [...], "A": [[...]], "B": [[...]]}
    {"kind": "genab1",     "p0": x, "beta1": [...], "A": [[...]], "B": [[...]]}
    {"kind": "ph-poisson", "beta": [...], "B": [[...]]}
    {"kind": "physical",   "nu": x, "alpha": [...], "P": [[...]]}

Densities are written as CSV with header ``n,p`` (compound sums use
``n,g``), samples as one integer per line or a ``value,count`` histogram,
severities as ``n,f``.  Numeric output is fixed at 17 significant digits.
"""

import json

import numpy as np

from .compound import SeverityDensity
from .em import EMParams
from .genab0 import GenAB0Rep, GenAB1Rep
from .phpoisson import PhysicalRep, PHPoissonRep

PRECISION = 17


def _fmt(x):
    return f"{float(x):.{PRECISION}g}"


def model_to_dict(model):
    """Serializable dictionary for any supported representation."""
    if isinstance(model, GenAB0Rep):
        return {"kind": "genab0", "beta": model.beta.tolist(),
                "A": model.A.tolist(), "B": model.B.tolist()}
    if isinstance(model, GenAB1Rep):
        return {"kind": "genab1", "p0": model.p0, "beta1": model.beta1.tolist(),
                "A": model.A.tolist(), "B": model.B.tolist()}
    if isinstance(model, PHPoissonRep):
        return {"kind": "ph-poisson", "beta": model.beta.tolist(), "B": model.B.tolist()}
    if isinstance(model, (PhysicalRep, EMParams)):
        return {"kind": "physical", "nu": model.nu, "alpha": model.alpha.tolist(),
                "P": model.P.tolist()}
    raise ValueError(f"unsupported model object {type(model).__name__}")


def model_from_dict(data):
    """Inverse of :func:`model_to_dict`; validates through the constructors."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ValueError("model file must be a JSON object with a 'kind' field")
    kind = data["kind"]
    try:
        if kind == "genab0":
            return GenAB0Rep(beta=data["beta"], A=data["A"], B=data["B"])
        if kind == "genab1":
            return GenAB1Rep(p0=data["p0"], beta1=data["beta1"], A=data["A"], B=data["B"])
        if kind == "ph-poisson":
            return PHPoissonRep(beta=data["beta"], B=data["B"], renormalize=True)
        if kind == "physical":
            return PhysicalRep(nu=data["nu"], alpha=data["alpha"], P=data["P"])
    except KeyError as exc:
        raise ValueError(f"model file is missing field {exc}") from exc
    raise ValueError(f"unknown model kind {kind!r}")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return model_from_dict(data)


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def write_density_csv(path, density, column="p", tol=None):
    """Write ``n,<column>`` rows plus a footer comment with the tail bound."""
    lines = [f"n,{column}"]
    for n, p in enumerate(density.probs):
        lines.append(f"{n},{_fmt(p)}")
    lines.append(f"# tail_bound = {_fmt(density.tail_bound)}")
    if tol is not None:
        lines.append(f"# tol = {_fmt(tol)}")
    _write_lines(path, lines)


def density_csv_text(density, column="p"):
    lines = [f"n,{column}"]
    for n, p in enumerate(density.probs):
        lines.append(f"{n},{_fmt(p)}")
    lines.append(f"# tail_bound = {_fmt(density.tail_bound)}")
    return "\n".join(lines) + "\n"


def read_severity_csv(path):
    """Severity file ``n,f``: missing indices are zero-filled."""
    entries = {}
    for row in _read_rows(path, expected_columns=2, header_names={"n", "f"}):
        n = int(row[0])
        if n < 0:
            raise ValueError("severity indices must be nonnegative")
        entries[n] = float(row[1])
    if not entries:
        raise ValueError("severity file contains no rows")
    f = np.zeros(max(entries) + 1)
    for n, value in entries.items():
        f[n] = value
    return SeverityDensity(f=f)


def read_samples(path):
    """Sample file: one integer per line, or a ``value,count`` histogram."""
    values = []
    for row in _read_rows(path, expected_columns=None, header_names={"value", "count", "y"}):
        if len(row) == 1:
            values.append(int(float(row[0])))
        elif len(row) == 2:
            value, count = int(float(row[0])), int(float(row[1]))
            values.extend([value] * count)
        else:
            raise ValueError("sample rows must have one or two columns")
    if not values:
        raise ValueError("sample file contains no rows")
    return np.array(values, dtype=np.int64)


def write_samples(path, samples):
    _write_lines(path, [str(int(v)) for v in samples])


def write_trace_csv(path, trace):
    """EM trace: iter, loglik, nu, then alpha and row-major P entries."""
    m = trace.iterations[0].theta.order
    header = ["iter", "loglik", "nu"]
    header += [f"alpha_{i + 1}" for i in range(m)]
    header += [f"P_{i + 1}_{j + 1}" for i in range(m) for j in range(m)]
    header += ["mstep_status", "stochastic_P"]
    lines = [",".join(header)]
    for row in trace.iterations:
        fields = [str(row.index), _fmt(row.loglik), _fmt(row.theta.nu)]
        fields += [_fmt(v) for v in row.theta.alpha]
        fields += [_fmt(v) for v in row.theta.P.ravel()]
        fields += [row.mstep_status, str(int(row.stochastic_P))]
        lines.append(",".join(fields))
    _write_lines(path, lines)


def _read_rows(path, expected_columns, header_names):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = [p.strip() for p in text.split(",")]
            if lineno == 1 and any(p.lower() in header_names for p in parts):
                continue
            if expected_columns is not None and len(parts) != expected_columns:
                raise ValueError(f"line {lineno}: expected {expected_columns} columns")
            rows.append(parts)
    return rows


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
