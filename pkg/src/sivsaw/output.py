"""Result files: atomic CSV/JSON writers and SVG figures.

CSV files have a header row ``name (unit),...``, period decimals, floats in
shortest round-trip form and ``\\n`` line endings.  SVG output is made
deterministic by fixing the hash salt and dropping the date stamp.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

import numpy as np  # noqa: E402

from .errors import InvalidParameterError  # noqa: E402
from .experiments import DetectionHistogram, ScanResult  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "sivsaw"
POP_LABEL = "normalized population"
AXIS_SCALE = {"Hz": (1e-9, "GHz"), "s": (1e9, "ns")}


def _umask():
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path, data):
    """Write ``data`` (str or bytes) to ``path`` via a temp file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"})) as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return repr(v) if math.isfinite(v) else str(v)


def csv_text(columns, data):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"{name} ({unit})" for name, unit in columns])
    for row in zip(*data):
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_csv(path):
    """Inverse of :func:`csv_text`: returns ``(columns, arrays)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidParameterError(f"{path} is empty")
    columns = []
    for h in rows[0]:
        name, _, unit = h.partition(" (")
        columns.append((name, unit.rstrip(")")))
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(columns))
    return columns, [data[:, i] for i in range(len(columns))]


def json_text(payload):
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_csv(path, columns, data):
    return atomic_write(path, csv_text(columns, data))


def write_json(path, payload):
    return atomic_write(path, json_text(payload))


def _axis(unit, name):
    factor, shown = AXIS_SCALE.get(unit, (1.0, unit))
    return factor, f"{name} ({shown})" if shown else name


def _plot_scans(ax, scans, fits):
    factor, label = _axis(scans[0].unit, scans[0].variable_name)
    for i, s in enumerate(scans):
        tag = s.metadata.get("power")
        name = f"{tag * 1e3:g} mW" if tag is not None and len(scans) > 1 else None
        line, = ax.plot(s.values * factor, s.population, "o", ms=3, label=name)
        fit = fits[i] if fits and i < len(fits) else None
        if fit is not None:
            xs = np.linspace(s.values.min(), s.values.max(), 500)
            ax.plot(xs * factor, fit.predict(xs), "-", color=line.get_color(), lw=1)
    ax.set_xlabel(label)
    ax.set_ylabel(POP_LABEL)
    if len(scans) > 1:
        ax.legend(frameon=False)


def _plot_histogram(ax, h):
    ax.stairs(h.bins, h.edges * 1e9, fill=False)
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("photon rate (1/s)" if h.kind == "rate" else "counts per bin")
    for (a, b), name in h.windows:
        ax.axvspan(a * 1e9, b * 1e9, color="0.9", zorder=0)


def _sidecar(result):
    if isinstance(result, DetectionHistogram):
        unit = "1/s" if result.kind == "rate" else "counts"
        return ([("t_start", "s"), ("t_stop", "s"), (result.kind, unit)],
                [result.edges[:-1], result.edges[1:], result.bins])
    scans = result if isinstance(result, (list, tuple)) else [result]
    s0 = scans[0]
    cols = [(s0.variable_name, s0.unit), ("population", "1")]
    if len(scans) == 1:
        return cols, [s0.values, s0.population]
    series = np.repeat(np.arange(len(scans)), [s.values.size for s in scans])
    return ([("series", "1")] + cols,
            [series, np.concatenate([s.values for s in scans]),
             np.concatenate([s.population for s in scans])])


def emit_plot_data(result, path, fits=None, title=None):
    """Render ``result`` to an SVG at ``path`` and write the plotted data next to it as CSV.

    ``result`` is a :class:`ScanResult`, a list of them (overlaid), a
    :class:`DetectionHistogram` (drawn as steps) or a ``(columns, data)``
    pair whose first column is the abscissa.
    """
    path = Path(path)
    if path.suffix.lower() != ".svg":
        path = path.with_suffix(".svg")
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    if isinstance(result, DetectionHistogram):
        _plot_histogram(ax, result)
        columns, data = _sidecar(result)
    elif isinstance(result, ScanResult) or (isinstance(result, (list, tuple)) and result
                                            and isinstance(result[0], ScanResult)):
        scans = [result] if isinstance(result, ScanResult) else list(result)
        _plot_scans(ax, scans, fits)
        columns, data = _sidecar(result)
    elif isinstance(result, tuple) and len(result) == 2:
        columns, data = result
        factor, label = _axis(columns[0][1], columns[0][0])
        for (name, unit), col in zip(columns[1:], data[1:]):
            ax.plot(np.asarray(data[0]) * factor, col, label=f"{name} ({unit})")
        ax.set_xlabel(label)
        ax.legend(frameon=False)
    else:
        raise InvalidParameterError(f"cannot plot {type(result).__name__}")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    atomic_write(path, buf.getvalue())
    write_csv(path.with_suffix(".csv"), columns, data)
    return path


def write_outputs(out, spec):
    """Write a :class:`~sivsaw.runner.RunOutput` according to an ``OutputSpec``; returns paths."""
    base = Path(spec.dir) / spec.prefix
    written = []
    if "csv" in spec.formats:
        written.append(write_csv(base.with_suffix(".csv"), out.table.columns, out.table.data))
    if "json" in spec.formats:
        written.append(write_json(base.with_suffix(".json"), out.payload))
    if "svg" in spec.formats:
        plot = out.plot
        if plot is out.table:
            plot = (out.table.columns, out.table.data)
        svg = Path(spec.dir) / f"{spec.prefix}_plot.svg"
        written.append(emit_plot_data(plot, svg, out.fits or None, title=out.kind))
        written.append(svg.with_suffix(".csv"))
    return written


def load_result(path):
    """Rebuild a plottable result from a CSV or JSON file written by ``simulate run``."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        d = json.loads(path.read_text())
        if "scan" in d:
            s = d["scan"]
            return ScanResult(s["variable_name"], s["values"], s["population"], s["unit"],
                              s.get("metadata", {}))
        if "scans" in d:
            return [ScanResult(s["variable_name"], s["values"], s["population"], s["unit"],
                               s.get("metadata", {})) for s in d["scans"]]
        if "bins" in d:
            return DetectionHistogram(bin_width=d["bin_width"], bins=d["bins"], kind=d["bin_kind"],
                                      edges=np.array(d["edges"]),
                                      windows=tuple((tuple(w), n) for w, n in d.get("windows", [])))
        if "frequency" in d:
            return ([("frequency", "Hz"), ("s11", "dB"), ("s21", "dB")],
                    [np.array(d["frequency"]), np.array(d["s11_db"]), np.array(d["s21_db"])])
        raise InvalidParameterError(f"{path}: unrecognised result JSON")
    columns, data = read_csv(path)
    names = [c[0] for c in columns]
    if names[-1] in ("rate", "counts") and names[:2] == ["t_start", "t_stop"]:
        edges = np.append(data[0], data[1][-1]) if data[0].size else np.array([0.0])
        return DetectionHistogram(bin_width=float(np.median(data[1] - data[0])) if data[0].size else 1e-9,
                                  bins=data[2], kind=names[-1], edges=edges)
    if "population" in names and names[0] != "series":
        i = names.index("population")
        if len(columns) == 2:
            return ScanResult(names[0], data[0], data[i], columns[0][1])
        if "power" in names:
            p = data[names.index("power")]
            return [ScanResult(names[0], data[0][p == v], data[i][p == v], columns[0][1],
                               {"power": float(v)}) for v in dict.fromkeys(p.tolist())]
    return columns, data
