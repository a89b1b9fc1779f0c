"""Field snapshots, VTK legacy exports, canonical JSON, and CSV traces.

The DFSC container stores one field with its grid and target metadata;
all floats are little-endian 64-bit, so write-then-read round-trips
bit-exactly. JSON is emitted through a canonical serializer (sorted
keys, 17 significant digits) so identical runs produce identical bytes.
"""

import struct

import numpy as np

from .fields import Field, GridSpec
from .manifolds import q_tensor, target_by_name

_MAGIC = b"DFSC"
_VERSION = 2
_SHAPE_CODES = {"box": 0, "ball": 1}
_SHAPE_NAMES = {v: k for k, v in _SHAPE_CODES.items()}


# ---------------------------------------------------------- DFSC ------


def write_field(field, path):
    """Serialize a field to the DFSC binary container."""
    grid = field.grid
    name = field.target.name.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", len(name)))
        fh.write(name)
        fh.write(struct.pack("<I", field.target.q))
        fh.write(struct.pack("<I", grid.dims))
        fh.write(struct.pack(f"<{grid.dims}I", *grid.n))
        fh.write(struct.pack("<d", grid.h))
        fh.write(struct.pack(f"<{grid.dims}d", *grid.origin))
        fh.write(struct.pack("<B", _SHAPE_CODES[grid.shape]))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field(path):
    """Read a DFSC container back into a Field (inverse of write_field)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    off = 0

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, raw, off)
        off += struct.calcsize(fmt)
        return vals

    if raw[:4] != _MAGIC:
        raise ValueError("not a DFSC file: bad magic")
    off = 4
    (version,) = take("<I")
    if version != _VERSION:
        raise ValueError(f"unsupported DFSC version {version}")
    (name_len,) = take("<I")
    name = raw[off:off + name_len].decode("utf-8")
    off += name_len
    (q,) = take("<I")
    (dims,) = take("<I")
    n = take(f"<{dims}I")
    (h,) = take("<d")
    origin = take(f"<{dims}d")
    (shape_code,) = take("<B")
    if shape_code not in _SHAPE_NAMES:
        raise ValueError(f"unknown domain shape code {shape_code}")
    target = target_by_name(name)
    if target.q != q:
        raise ValueError(
            f"target {name!r} has q={target.q}, file says q={q}")
    grid = GridSpec(n=n, h=h, origin=origin, shape=_SHAPE_NAMES[shape_code])
    m = target.ambient_dim
    count = int(np.prod(n)) * m
    if len(raw) - off < 8 * count:
        raise ValueError("DFSC payload truncated")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    values = values.reshape(n + (m,)).astype(np.float64, copy=True)
    return Field(grid, target, values)


# ----------------------------------------------------------- JSON -----


def _canon(obj, out):
    if isinstance(obj, dict):
        out.append("{")
        keys = sorted(obj, key=str)
        for i, k in enumerate(keys):
            if i:
                out.append(",")
            _canon(str(k), out)
            out.append(":")
            _canon(obj[k], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)) or (
            isinstance(obj, np.ndarray) and obj.ndim >= 1):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _canon(v, out)
        out.append("]")
    elif isinstance(obj, str):
        out.append('"')
        for ch in obj:
            if ch in '"\\':
                out.append("\\" + ch)
            elif ord(ch) < 0x20:
                out.append(f"\\u{ord(ch):04x}")
            else:
                out.append(ch)
        out.append('"')
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            raise ValueError(f"non-finite value {x!r} in JSON payload")
        out.append(f"{x:.17g}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def dumps_canonical(obj):
    """Deterministic JSON text: sorted keys, floats at 17 digits."""
    out = []
    _canon(obj, out)
    return "".join(out)


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(obj))
        fh.write("\n")


def report_payload(report):
    """Plain-dict schema of a DefectReport for JSON export.

    lines: vertex polylines with closure and boundary flags; points:
    {cell, center, degree}; profiles keyed by 'i,j,k' cell labels.
    """
    return {
        "theta": report.theta,
        "chain_length": report.chain_length,
        "lines": [
            {
                "points": [[float(c) for c in pt] for pt in line["points"]],
                "closed": bool(line["closed"]),
                "boundary_ends": [bool(b) for b in line["boundary_ends"]],
            }
            for line in report.line_polylines
        ],
        "line_cells": [list(c) for c in report.line_cells],
        "points": [
            {
                "cell": list(pt["cell"]),
                "center": [float(c) for c in pt["center"]],
                "degree": int(pt["degree"]),
            }
            for pt in report.points
        ],
        "unclassified": [list(c) for c in report.unclassified],
        "profiles": {
            ",".join(str(i) for i in cell): [[r, v] for r, v in prof]
            for cell, prof in report.profiles.items()
        },
        "metadata": report.metadata,
    }


# ------------------------------------------------------------ CSV -----


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_trace_csv(trace, path):
    """Energy trace rows (iter, energy, grad_norm, step) with header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iter,energy,grad_norm,step\n")
        for row in trace:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_chain_csv(chain, active, path):
    """Obstruction support as dual segments, one row per plaquette."""
    header = ("axis1,axis2,base_i,base_j,base_k,coeff,"
              "x0,y0,z0,x1,y1,z1,boundary0,boundary1")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for seg in chain.segments(active):
            base = list(seg["base"]) + [0] * (3 - len(seg["base"]))
            p0 = list(seg["points"][0]) + [0.0] * (3 - len(seg["points"][0]))
            p1 = list(seg["points"][1]) + [0.0] * (3 - len(seg["points"][1]))
            row = (list(seg["axes"]) + base + [seg["coeff"]] + p0 + p1
                   + [seg["boundary"][0], seg["boundary"][1]])
            fh.write(",".join(_fmt(v) for v in row) + "\n")


# ------------------------------------------------------------ VTK -----


def _vtk_points_order(values, dims):
    """Flatten node data in VTK point order (first axis fastest)."""
    if dims == 2:
        flat = values.transpose(1, 0, 2).reshape(-1, values.shape[-1])
    else:
        flat = values.transpose(2, 1, 0, 3).reshape(-1, values.shape[-1])
    return flat


def write_vtk_field(field, path, include_q=False):
    """Legacy ASCII STRUCTURED_POINTS with the field as point vectors.

    3-component targets are written as VECTORS (plus Q TENSORS for
    two-sheeted targets when include_q is set); other ambient dimensions
    go into a FIELD array with one tuple per node.
    """
    grid = field.grid
    m = field.target.ambient_dim
    n = grid.n + (1,) * (3 - grid.dims)
    origin = grid.origin + (0.0,) * (3 - grid.dims)
    npts = int(np.prod(grid.n))
    flat = _vtk_points_order(field.values, grid.dims)
    lines = [
        "# vtk DataFile Version 3.0",
        "defectoscope field",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {n[0]} {n[1]} {n[2]}",
        f"ORIGIN {_fmt(origin[0])} {_fmt(origin[1])} {_fmt(origin[2])}",
        f"SPACING {_fmt(grid.h)} {_fmt(grid.h)} {_fmt(grid.h)}",
        f"POINT_DATA {npts}",
    ]
    if m == 3:
        lines.append("VECTORS director double")
        for row in flat:
            lines.append(" ".join(_fmt(v) for v in row))
        if include_q and len(field.target.group) == 2:
            Q = q_tensor(field.values)
            qflat = _vtk_points_order(
                Q.reshape(grid.n + (9,)), grid.dims)
            lines.append("TENSORS q double")
            for row in qflat:
                lines.append(" ".join(_fmt(v) for v in row[:3]))
                lines.append(" ".join(_fmt(v) for v in row[3:6]))
                lines.append(" ".join(_fmt(v) for v in row[6:9]))
    else:
        lines.append("FIELD FieldData 1")
        lines.append(f"u {m} {npts} double")
        for row in flat:
            lines.append(" ".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_vtk_defects(report, path):
    """Legacy ASCII POLYDATA: obstruction polylines plus point glyphs."""
    pts = []
    cells_lines = []
    for line in report.line_polylines:
        verts = [tuple(float(c) for c in p) + (0.0,) * (3 - len(p))
                 for p in line["points"]]
        idx = []
        for v in verts:
            idx.append(len(pts))
            pts.append(v)
        if line["closed"] and len(idx) > 1:
            idx.append(idx[0])
        if len(idx) > 1:
            cells_lines.append(idx)
    glyphs = []
    for pt in report.points:
        c = tuple(float(v) for v in pt["center"])
        glyphs.append(len(pts))
        pts.append(c + (0.0,) * (3 - len(c)))
    out = [
        "# vtk DataFile Version 3.0",
        "defectoscope singular set",
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {len(pts)} double",
    ]
    for p in pts:
        out.append(" ".join(_fmt(v) for v in p))
    if cells_lines:
        total = sum(len(ix) + 1 for ix in cells_lines)
        out.append(f"LINES {len(cells_lines)} {total}")
        for ix in cells_lines:
            out.append(" ".join(str(v) for v in [len(ix)] + ix))
    if glyphs:
        out.append(f"VERTICES {len(glyphs)} {2 * len(glyphs)}")
        for g in glyphs:
            out.append(f"1 {g}")
    if glyphs:
        out.append(f"POINT_DATA {len(pts)}")
        out.append("SCALARS degree int 1")
        out.append("LOOKUP_TABLE default")
        degree_of = {g: int(pt["degree"])
                     for g, pt in zip(glyphs, report.points)}
        for i in range(len(pts)):
            out.append(str(degree_of.get(i, 0)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
