"""File formats: GLF1 field dumps and small CSV helpers."""

from __future__ import annotations

import csv
import io

import numpy as np

from .geometry import ComplexField, build_octant_geometry

MAGIC = "GLF1"


def fmt(x):
    """Round-trip float formatting (17 significant digits)."""
    return format(float(x), ".17g")


def write_glf1(path, field: ComplexField):
    g = field.geometry
    header = f"{MAGIC}\nR={fmt(g.R)}\nh={fmt(g.h)}\ndims={g.dims[0]} {g.dims[1]} {g.dims[2]}\n"
    data = np.empty(field.values.shape + (2,), dtype="<f8")
    data[..., 0] = field.values.real
    data[..., 1] = field.values.imag
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes(order="C"))


def read_glf1(path) -> ComplexField:
    with open(path, "rb") as fh:
        lines = [fh.readline().decode("ascii").strip() for _ in range(4)]
        payload = fh.read()
    if lines[0] != MAGIC:
        raise ValueError(f"{path}: not a GLF1 file")
    try:
        R = float(lines[1].split("=", 1)[1])
        h = float(lines[2].split("=", 1)[1])
        dims = tuple(int(t) for t in lines[3].split("=", 1)[1].split())
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed GLF1 header") from exc
    geom = build_octant_geometry(R, h)
    if geom.dims != dims:
        raise ValueError(f"{path}: dims {dims} inconsistent with R={R}, h={h}")
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != 2 * int(np.prod(dims)):
        raise ValueError(f"{path}: payload size does not match dims")
    data = data.reshape(dims + (2,))
    return ComplexField(geom, data[..., 0] + 1j * data[..., 1])


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
