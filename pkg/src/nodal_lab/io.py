"""JSON loaders and CSV/JSON writers.

Input schemas::

    graph     {"vertices": n, "edges": [[u, v], ...]}
    operator  {"graph": <graph>, "kind": "normalized"|"generalized",
               "diagonal": [...], "edge_weights": [...]}
    metric    <graph> + {"lengths": [...], "conditions": ["neumann"|"dirichlet", ...]}
    torus     {"generators": [...], "coefficients": [[[num, den], ...], ...]}

A metric file may carry its length relations inline, either as
``"decomposition": <torus>`` or ``"relations": [[c_1, ..., c_E], ...]``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import sympy

from .discrete import DiscreteOperator, build_generalized, build_normalized
from .graph import CombinatorialGraph, GraphValidationError
from .metric import MetricGraph
from .torus import LengthDecomposition, decompose_lengths


class InputError(ValueError):
    """Malformed or inconsistent input file."""


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a JSON object")
    return data


def _require(data: dict, *keys):
    missing = [k for k in keys if k not in data]
    if missing:
        raise InputError(f"missing field(s): {', '.join(missing)}")


def graph_from_json(data: dict) -> CombinatorialGraph:
    _require(data, "vertices", "edges")
    try:
        return CombinatorialGraph.from_json(data)
    except GraphValidationError as exc:
        raise InputError(f"invalid graph ({exc.rule}): {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid graph: {exc}") from exc


def operator_from_json(data: dict) -> DiscreteOperator:
    """Operator file, or a bare graph (taken as its normalized Laplacian)."""
    if "graph" not in data:
        return build_normalized(graph_from_json(data))
    graph = graph_from_json(data["graph"])
    kind = data.get("kind", "normalized")
    if kind == "normalized":
        return build_normalized(graph)
    if kind != "generalized":
        raise InputError(f"unknown operator kind {kind!r}")
    _require(data, "diagonal", "edge_weights")
    try:
        return build_generalized(graph, data["edge_weights"], data["diagonal"])
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _length(value) -> float:
    """A length given as a number or as an expression string like ``"sqrt(2)"``."""
    if isinstance(value, str):
        try:
            return float(sympy.sympify(value, rational=True).evalf(30))
        except (sympy.SympifyError, TypeError, ValueError) as exc:
            raise InputError(f"cannot parse length {value!r}") from exc
    return float(value)


def metric_from_json(data: dict) -> MetricGraph:
    graph = graph_from_json(data)
    _require(data, "lengths")
    try:
        lengths = np.array([_length(v) for v in data["lengths"]])
        return MetricGraph(graph, lengths, tuple(data.get("conditions", ())))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def decomposition_from_json(data: dict, mg: MetricGraph | None = None) -> LengthDecomposition:
    """Explicit decomposition, inline relations, or (default) independent lengths."""
    try:
        if "generators" in data:
            decomp = LengthDecomposition.from_json(data)
        elif "decomposition" in data:
            decomp = LengthDecomposition.from_json(data["decomposition"])
        elif mg is not None:
            decomp = decompose_lengths(mg.lengths, data.get("relations", ()))
        else:
            raise InputError("no decomposition given")
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid decomposition: {exc}") from exc
    if mg is not None:
        err = np.max(np.abs(decomp.lengths() - mg.lengths))
        if err > 1e-10 * max(1.0, float(np.max(mg.lengths))):
            raise InputError(f"decomposition disagrees with the lengths by {err:.2e}")
    return decomp


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
