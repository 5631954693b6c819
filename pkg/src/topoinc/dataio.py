"""File formats: dataset CSV, field CSV, trace CSV, report JSON, checkpoints.

All floating-point output uses 17 significant digits, which round-trips
float64 exactly.  Files contain no timestamps, so identical inputs produce
byte-identical outputs.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .flow import FlowModel
from .geometry import LabeledSample
from .topofield import Domain, ScalarField


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):  # bool before int: bool is an int subclass
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def write_json(path, payload: dict):
    Path(path).write_text(json.dumps(_jsonify(payload), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


# -- datasets ----------------------------------------------------------------


def dataset_to_csv(samples, noisy_points=None) -> str:
    """Rows x1,x2,label[,u]; noisy_points override the sample coordinates."""
    buf = io.StringIO()
    with_u = all(s.u is not None for s in samples)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x1", "x2", "label", "u"] if with_u else ["x1", "x2", "label"])
    for k, s in enumerate(samples):
        p = s.point if noisy_points is None else noisy_points[k]
        row = [fmt(p[0]), fmt(p[1]), str(s.label)]
        if with_u:
            row.append(fmt(s.u))
        w.writerow(row)
    return buf.getvalue()


def dataset_from_csv(text: str):
    """Returns (points (n,2), labels (n,), params (n,) or None)."""
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    has_u = len(header) > 3 and header[3] == "u"
    pts, labels, us = [], [], []
    for row in rows[1:]:
        if not row:
            continue
        pts.append([float(row[0]), float(row[1])])
        labels.append(int(row[2]))
        if has_u:
            us.append(float(row[3]))
    return (
        np.asarray(pts, dtype=float),
        np.asarray(labels, dtype=int),
        np.asarray(us, dtype=float) if has_u else None,
    )


def load_dataset(path):
    return dataset_from_csv(Path(path).read_text())


def samples_from_arrays(points, labels, us=None) -> list[LabeledSample]:
    return [
        LabeledSample(
            point=np.asarray(points[k], dtype=float),
            label=int(labels[k]),
            u=float(us[k]) if us is not None else None,
        )
        for k in range(len(points))
    ]


# -- scalar fields -----------------------------------------------------------


def field_to_csv(field: ScalarField) -> str:
    """Header line `# domain x_lo x_hi y_lo y_hi nx ny`, then one row per
    x-index with ny comma-separated values."""
    x_lo, x_hi, y_lo, y_hi = field.domain
    nx, ny = field.resolution
    lines = [f"# domain {fmt(x_lo)} {fmt(x_hi)} {fmt(y_lo)} {fmt(y_hi)} {nx} {ny}"]
    for i in range(nx):
        lines.append(",".join(fmt(v) for v in field.values[i]))
    return "\n".join(lines) + "\n"


def field_from_csv(text: str) -> ScalarField:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "#" or head[1] != "domain":
        raise ValueError("missing field header line")
    x_lo, x_hi, y_lo, y_hi = map(float, head[2:6])
    nx, ny = int(head[6]), int(head[7])
    vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if vals.shape != (nx, ny):
        raise ValueError(f"field shape {vals.shape} does not match header ({nx}, {ny})")
    return ScalarField(domain=(x_lo, x_hi, y_lo, y_hi), values=vals)


def load_field(path) -> ScalarField:
    return field_from_csv(Path(path).read_text())


# -- projection traces -------------------------------------------------------


def trace_to_csv(result) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "z1", "z2", "x1", "x2", "objective"])
    for k in range(len(result.trace_objective)):
        w.writerow(
            [
                str(k),
                fmt(result.trace_z[k, 0]),
                fmt(result.trace_z[k, 1]),
                fmt(result.trace_x[k, 0]),
                fmt(result.trace_x[k, 1]),
                fmt(result.trace_objective[k]),
            ]
        )
    return buf.getvalue()


# -- model checkpoints -------------------------------------------------------


def save_model(path, model: FlowModel):
    write_json(path, model.to_dict())


def load_model(path) -> FlowModel:
    return FlowModel.from_dict(read_json(path))


# -- label grids --------------------------------------------------------------


def labels_to_csv(labels: np.ndarray) -> str:
    return "\n".join(",".join(str(int(v)) for v in row) for row in labels) + "\n"


def labels_from_csv(text: str) -> np.ndarray:
    return np.array(
        [[int(v) for v in ln.split(",")] for ln in text.splitlines() if ln.strip()],
        dtype=int,
    )
