"""Result-file serialization.

A result file is self-describing: '#'-prefixed comment lines carry a
single-line JSON metadata record (axes, shape, flags, full parameter
echo, tool version, optional timestamp), followed by a delimited
numeric body -- axis values then the result value, slow axis first,
row-major.  Re-parsing header plus body reproduces the ResultGrid
exactly (floats are written with 17 significant digits).
"""

from __future__ import annotations

import json
import os

import numpy as np

from .correlators import ResultGrid
from .errors import ConfigError

FORMAT_TAG = "mollow-result v1"


def _meta_record(grid: ResultGrid, timestamp: str | None) -> dict:
    rec = {
        "axes": [{"name": n, "values": [float(v) for v in a]} for n, a in grid.axes],
        "shape": list(grid.values.shape),
        "metadata": grid.metadata,
        "flags": [{"index": list(k) if isinstance(k, tuple) else [int(k)], "reason": v}
                  for k, v in sorted(grid.flags.items(),
                                     key=lambda kv: kv[0] if isinstance(kv[0], tuple) else (kv[0],))],
    }
    if timestamp is not None:
        rec["timestamp"] = timestamp
    return rec


def _restore_flags(records) -> dict:
    out = {}
    for r in records:
        idx = tuple(r["index"])
        out[idx if len(idx) > 1 else idx[0]] = r["reason"]
    return out


def write_result(grid: ResultGrid, path: str, fmt: str = "csv",
                 timestamp: str | None = None, overlay: dict | None = None) -> list[str]:
    """Persist a grid; returns the list of files written.

    ``timestamp`` is quarantined to one header field so that omitting it
    makes outputs byte-identical across runs.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}")
    written = []
    meta = _meta_record(grid, timestamp)
    if fmt == "json":
        doc = {"format": FORMAT_TAG, **meta,
               "values": np.asarray(grid.values).reshape(-1).tolist()}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
    else:
        names = [n for n, _ in grid.axes] + ["value"]
        with open(path, "w") as fh:
            fh.write(f"# {FORMAT_TAG}\n")
            fh.write("# META " + json.dumps(meta, sort_keys=True) + "\n")
            fh.write("# columns: " + ",".join(names) + "\n")
            axes = [np.asarray(a) for _, a in grid.axes]
            flat = np.asarray(grid.values).reshape(-1)
            for k, v in enumerate(flat):
                idx = np.unravel_index(k, grid.values.shape)
                cells = [f"{axes[d][i]:.17g}" for d, i in enumerate(idx)]
                cells.append(f"{v:.17g}")
                fh.write(",".join(cells) + "\n")
    written.append(path)
    if overlay is not None:
        sidecar = os.path.splitext(path)[0] + ".overlay.json"
        with open(sidecar, "w") as fh:
            json.dump(overlay, fh, indent=1, sort_keys=True)
            fh.write("\n")
        written.append(sidecar)
    return written


def read_result(path: str) -> ResultGrid:
    """Inverse of :func:`write_result` for both formats."""
    with open(path) as fh:
        first = fh.read(1)
        fh.seek(0)
        if first == "{":
            doc = json.load(fh)
            if doc.get("format") != FORMAT_TAG:
                raise ConfigError(f"{path}: not a {FORMAT_TAG} file")
            axes = [(a["name"], np.array(a["values"], dtype=float)) for a in doc["axes"]]
            values = np.array(doc["values"], dtype=float).reshape(doc["shape"])
            return ResultGrid(axes=axes, values=values, metadata=doc["metadata"],
                              flags=_restore_flags(doc["flags"]))
        lines = fh.readlines()
    if not lines or lines[0].strip() != f"# {FORMAT_TAG}":
        raise ConfigError(f"{path}: not a {FORMAT_TAG} file")
    meta = None
    body = []
    for ln in lines[1:]:
        if ln.startswith("# META "):
            meta = json.loads(ln[len("# META "):])
        elif ln.startswith("#"):
            continue
        elif ln.strip():
            body.append(ln.strip().split(","))
    if meta is None:
        raise ConfigError(f"{path}: missing metadata header")
    axes = [(a["name"], np.array(a["values"], dtype=float)) for a in meta["axes"]]
    shape = tuple(meta["shape"])
    values = np.array([float(row[-1]) for row in body]).reshape(shape)
    return ResultGrid(axes=axes, values=values, metadata=meta["metadata"],
                      flags=_restore_flags(meta["flags"]))
