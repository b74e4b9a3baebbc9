"""CSV and JSON formats used by the command line.

All tables carry a header row.  Floats are written with ``repr`` so every
value parses back to the identical double.  Panels use long format:

* experts: ``time,expert,probability,value``
* observations: ``time,value``
* combined quantiles: ``time,probability,value``
* weights: ``time,expert,probability,weight``
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .grid import ProbGrid


class SchemaError(ValueError):
    """A CSV file does not follow its schema; the message names row and column."""


def fmt(x):
    """Shortest round-trip text for a float."""
    return repr(float(x))


def _time_key(times):
    # integer time stamps sort numerically; anything else (ISO-8601) as text
    try:
        ints = [int(t) for t in times]
    except ValueError:
        return sorted(times)
    order = sorted(range(len(times)), key=lambda i: ints[i])
    return [times[i] for i in order]


def _open_rows(path, columns):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {','.join(columns)}") from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaError(f"{path}: row 1: missing column(s) {', '.join(missing)}")
        idx = [header.index(c) for c in columns]
        rows = []
        for n, raw in enumerate(reader, start=2):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) < len(header):
                raise SchemaError(f"{path}: row {n}: expected {len(header)} fields, got {len(raw)}")
            rows.append((n, [raw[i].strip() for i in idx]))
    return path, rows


def _parse_float(path, n, column, text, finite=True):
    try:
        v = float(text)
    except ValueError:
        raise SchemaError(f"{path}: row {n}, column '{column}': cannot parse {text!r} as a number") from None
    if finite and not math.isfinite(v):
        raise SchemaError(f"{path}: row {n}, column '{column}': value must be finite, got {text!r}")
    return v


def _parse_prob(path, n, text):
    p = _parse_float(path, n, "probability", text)
    if not 0.0 < p < 1.0:
        raise SchemaError(f"{path}: row {n}, column 'probability': {text!r} is outside (0, 1)")
    return p


def read_experts_csv(path):
    """Read a long expert table.

    Returns ``(times, expert_names, grid, values)`` with ``values`` of shape
    ``(T, M, K)``.  Every (time, expert, probability) cell must be present
    exactly once.
    """
    path, rows = _open_rows(path, ("time", "expert", "probability", "value"))
    cells = {}
    times, experts, probs = {}, {}, set()
    for n, (t, e, p_text, v_text) in rows:
        if not t:
            raise SchemaError(f"{path}: row {n}, column 'time': empty")
        if not e:
            raise SchemaError(f"{path}: row {n}, column 'expert': empty")
        p = _parse_prob(path, n, p_text)
        v = _parse_float(path, n, "value", v_text)
        key = (t, e, p)
        if key in cells:
            raise SchemaError(f"{path}: row {n}: duplicate entry for time={t}, expert={e}, probability={p_text}")
        cells[key] = v
        times.setdefault(t, None)
        experts.setdefault(e, None)
        probs.add(p)
    if not cells:
        raise SchemaError(f"{path}: no data rows")
    times = _time_key(list(times))
    names = list(experts)
    grid = ProbGrid(sorted(probs))
    values = np.empty((len(times), grid.size, len(names)))
    for i, t in enumerate(times):
        for k, e in enumerate(names):
            for m, p in enumerate(grid.probs):
                try:
                    values[i, m, k] = cells[(t, e, float(p))]
                except KeyError:
                    raise SchemaError(
                        f"{path}: missing value for time={t}, expert={e}, probability={fmt(p)}"
                    ) from None
    return times, names, grid, values


def read_observations_csv(path):
    """Return ``(times, y)`` ordered by time."""
    path, rows = _open_rows(path, ("time", "value"))
    seen = {}
    for n, (t, v_text) in rows:
        if not t:
            raise SchemaError(f"{path}: row {n}, column 'time': empty")
        if t in seen:
            raise SchemaError(f"{path}: row {n}: duplicate time {t}")
        seen[t] = _parse_float(path, n, "value", v_text)
    if not seen:
        raise SchemaError(f"{path}: no data rows")
    times = _time_key(list(seen))
    return times, np.array([seen[t] for t in times])


def read_quantiles_csv(path):
    """Return ``(times, grid, forecasts)`` from a combined-quantile table."""
    path, rows = _open_rows(path, ("time", "probability", "value"))
    cells, times, probs = {}, {}, set()
    for n, (t, p_text, v_text) in rows:
        p = _parse_prob(path, n, p_text)
        if (t, p) in cells:
            raise SchemaError(f"{path}: row {n}: duplicate entry for time={t}, probability={p_text}")
        cells[(t, p)] = _parse_float(path, n, "value", v_text)
        times.setdefault(t, None)
        probs.add(p)
    if not cells:
        raise SchemaError(f"{path}: no data rows")
    times = _time_key(list(times))
    grid = ProbGrid(sorted(probs))
    out = np.empty((len(times), grid.size))
    for i, t in enumerate(times):
        for m, p in enumerate(grid.probs):
            try:
                out[i, m] = cells[(t, float(p))]
            except KeyError:
                raise SchemaError(f"{path}: missing value for time={t}, probability={fmt(p)}") from None
    return times, grid, out


def read_weights_csv(path):
    """Return ``(times, expert_names, grid, weights)`` with weights ``(T, M, K)``."""
    path, rows = _open_rows(path, ("time", "expert", "probability", "weight"))
    cells, times, experts, probs = {}, {}, {}, set()
    for n, (t, e, p_text, w_text) in rows:
        p = _parse_prob(path, n, p_text)
        cells[(t, e, p)] = _parse_float(path, n, "weight", w_text)
        times.setdefault(t, None)
        experts.setdefault(e, None)
        probs.add(p)
    if not cells:
        raise SchemaError(f"{path}: no data rows")
    times = _time_key(list(times))
    names = list(experts)
    grid = ProbGrid(sorted(probs))
    out = np.array([[[cells[(t, e, float(p))] for e in names] for p in grid.probs] for t in times])
    return times, names, grid, out


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(c) if isinstance(c, (float, np.floating)) else c for c in row])


def write_experts_csv(path, times, names, grid, values):
    write_csv(path, ("time", "expert", "probability", "value"), (
        (t, e, float(p), float(values[i, m, k]))
        for i, t in enumerate(times) for k, e in enumerate(names) for m, p in enumerate(grid.probs)
    ))


def write_observations_csv(path, times, y):
    y = getattr(y, "y", y)
    write_csv(path, ("time", "value"), ((t, float(v)) for t, v in zip(times, y)))


def write_quantiles_csv(path, times, grid, forecasts):
    write_csv(path, ("time", "probability", "value"), (
        (t, float(p), float(forecasts[i, m])) for i, t in enumerate(times) for m, p in enumerate(grid.probs)
    ))


def write_weights_csv(path, times, names, grid, weights):
    write_csv(path, ("time", "expert", "probability", "weight"), (
        (t, e, float(p), float(weights[i, m, k]))
        for i, t in enumerate(times) for k, e in enumerate(names) for m, p in enumerate(grid.probs)
    ))


def load_config(path):
    """Read a JSON object of run settings."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise SchemaError(f"{path}: top level must be a JSON object")
    return cfg
