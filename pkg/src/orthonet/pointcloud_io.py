"""Point-cloud and mesh I/O: ASCII OFF, ASCII PLY, XYZ/CSV, and mesh sampling.

Every parser accepts ``bytes`` or ``str`` and either returns a value or raises
a :class:`~orthonet.errors.ParseError` subclass; no other exception escapes
for any input.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError, ParseError, SchemaError, UnsupportedFormatError

MESH_SUFFIXES = {".off"}
CLOUD_SUFFIXES = {".ply", ".xyz", ".txt", ".csv", ".pts"}
SUPPORTED_SUFFIXES = MESH_SUFFIXES | CLOUD_SUFFIXES


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered set of 3D points with optional per-point RGB colors."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DataError(f"points must have shape (n, 3), got {pts.shape}")
        if len(pts) == 0:
            raise DataError("a point cloud needs at least one point")
        if not np.isfinite(pts).all():
            raise DataError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.colors is not None:
            col = np.asarray(self.colors)
            if col.shape != pts.shape:
                raise DataError(f"colors must have shape {pts.shape}, got {col.shape}")
            if not np.isfinite(col).all() or (col < 0).any() or (col > 255).any():
                raise DataError("colors must lie in [0, 255]")
            col = np.rint(col).astype(np.uint8)
            col.setflags(write=False)
            object.__setattr__(self, "colors", col)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.isfinite(verts).all():
            raise DataError("vertex coordinates must be finite")
        if len(faces):
            if faces.min() < 0 or faces.max() >= len(verts):
                raise DataError("face index out of range")
            if ((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2])
                    | (faces[:, 0] == faces[:, 2])).any():
                raise DataError("every face needs three distinct vertex indices")
        verts.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def _decode(data: bytes | str) -> str:
    if isinstance(data, str):
        return data
    try:
        return bytes(data).decode("utf-8")
    except UnicodeDecodeError as exc:
        line = bytes(data)[: exc.start].count(b"\n") + 1
        raise ParseError("input is not valid UTF-8 text", line) from None


def _content_lines(text: str):
    """Yield ``(lineno, tokens)`` for lines that are not blank or comments."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _float(tok: str, lineno: int) -> float:
    try:
        value = float(tok)
    except ValueError:
        raise ParseError(f"non-numeric token {tok!r}", lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {tok!r}", lineno)
    return value


def _int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected an integer, got {tok!r}", lineno) from None


# --------------------------------------------------------------------------- OFF

def parse_off(data: bytes | str) -> TriangleMesh:
    """Parse an ASCII OFF mesh; polygons are fan-triangulated from their first vertex.

    Triangles that repeat a vertex index (collapsed polygons) are dropped.
    """
    lines = _content_lines(_decode(data))
    lineno, tokens = next(lines, (1, None))
    if tokens is None:
        raise ParseError("empty file: missing OFF header", 1)
    head = tokens[0]
    if not head.startswith("OFF"):
        raise ParseError(f"expected 'OFF' header, got {head!r}", lineno)
    # some exporters glue the counts onto the header ("OFF490 518 0")
    rest = ([head[3:]] if head != "OFF" else []) + tokens[1:]
    if not rest:
        lineno, rest = next(lines, (lineno + 1, None))
        if rest is None:
            raise ParseError("missing counts line", lineno)
    if len(rest) < 2:
        raise ParseError("counts line needs vertex and face counts", lineno)
    n_verts, n_faces = _int(rest[0], lineno), _int(rest[1], lineno)
    if n_verts < 0 or n_faces < 0:
        raise ParseError("negative element count", lineno)

    verts = []
    for _ in range(n_verts):
        lineno, tokens = next(lines, (lineno + 1, None))
        if tokens is None:
            raise ParseError(f"unexpected end of file: expected {n_verts} vertices", lineno)
        if len(tokens) < 3:
            raise ParseError("vertex line needs 3 coordinates", lineno)
        verts.append([_float(t, lineno) for t in tokens[:3]])

    tris = []
    for _ in range(n_faces):
        lineno, tokens = next(lines, (lineno + 1, None))
        if tokens is None:
            raise ParseError(f"unexpected end of file: expected {n_faces} faces", lineno)
        k = _int(tokens[0], lineno)
        if k < 3:
            raise ParseError(f"face needs at least 3 vertices, got {k}", lineno)
        if len(tokens) < k + 1:
            raise ParseError(f"face declares {k} vertices but lists {len(tokens) - 1}", lineno)
        idx = [_int(t, lineno) for t in tokens[1:k + 1]]
        for i in idx:
            if not 0 <= i < n_verts:
                raise ParseError(f"face index {i} out of range for {n_verts} vertices", lineno)
        for j in range(1, k - 1):
            tri = (idx[0], idx[j], idx[j + 1])
            if len(set(tri)) == 3:
                tris.append(tri)

    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                        np.array(tris, dtype=np.int64).reshape(-1, 3))


# --------------------------------------------------------------------------- XYZ

_SEP = re.compile(r"[,\s]+")


def parse_xyz(data: bytes | str) -> PointCloud:
    """Parse whitespace/comma separated ``x y z`` or ``x y z r g b`` lines."""
    text = _decode(data)
    pts, cols = [], []
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f for f in _SEP.split(line) if f]
        if len(fields) not in (3, 6):
            raise ParseError(f"expected 3 or 6 fields, got {len(fields)}", lineno)
        if width is not None and len(fields) != width:
            raise ParseError(f"inconsistent field count: {len(fields)} after {width}", lineno)
        width = len(fields)
        values = [_float(f, lineno) for f in fields]
        pts.append(values[:3])
        if width == 6:
            rgb = values[3:]
            if any(c < 0 or c > 255 for c in rgb):
                raise ParseError("color components must lie in [0, 255]", lineno)
            cols.append(rgb)
    if not pts:
        raise ParseError("no points found", 1)
    return PointCloud(np.array(pts), np.array(cols) if width == 6 else None)


def format_xyz(cloud: PointCloud) -> str:
    """Canonical XYZ text: 9 significant digits, one point per line."""
    out = []
    if cloud.colors is None:
        for x, y, z in cloud.points:
            out.append(f"{x:.9g} {y:.9g} {z:.9g}\n")
    else:
        for (x, y, z), (r, g, b) in zip(cloud.points, cloud.colors):
            out.append(f"{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}\n")
    return "".join(out)


# --------------------------------------------------------------------------- PLY

_PLY_SCALARS = {"char", "uchar", "short", "ushort", "int", "uint", "float", "double",
                "int8", "uint8", "int16", "uint16", "int32", "uint32", "float32", "float64"}


def parse_ply_ascii(data: bytes | str) -> PointCloud:
    """Parse the ``vertex`` element of an ASCII PLY file.

    Properties other than x/y/z and red/green/blue are skipped; other
    elements (faces, edges) are read past but ignored.
    """
    text = _decode(data)
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic line", 1)

    fmt = None
    elements = []  # [name, count, [(prop, is_list)]]
    lineno = 1
    for lineno in range(2, len(lines) + 1):
        tokens = lines[lineno - 1].split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        kw = tokens[0]
        if kw == "end_header":
            break
        if kw == "format":
            if len(tokens) < 2:
                raise ParseError("incomplete format line", lineno)
            if tokens[1] != "ascii":
                raise UnsupportedFormatError(f"unsupported PLY format {tokens[1]!r}", lineno)
            fmt = tokens[1]
        elif kw == "element":
            if len(tokens) != 3:
                raise ParseError("element line needs a name and a count", lineno)
            count = _int(tokens[2], lineno)
            if count < 0:
                raise ParseError("negative element count", lineno)
            elements.append([tokens[1], count, []])
        elif kw == "property":
            if not elements:
                raise ParseError("property declared before any element", lineno)
            if len(tokens) == 3 and tokens[1] in _PLY_SCALARS:
                elements[-1][2].append((tokens[2], False))
            elif (len(tokens) == 5 and tokens[1] == "list"
                  and tokens[2] in _PLY_SCALARS and tokens[3] in _PLY_SCALARS):
                elements[-1][2].append((tokens[4], True))
            else:
                raise ParseError("malformed property line", lineno)
        else:
            raise ParseError(f"unknown header keyword {kw!r}", lineno)
    else:
        raise ParseError("missing end_header", lineno)
    if fmt is None:
        raise ParseError("missing format line", lineno)

    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise SchemaError("no 'vertex' element declared", lineno)
    names = [p for p, _ in vertex[2]]
    for axis in "xyz":
        if axis not in names:
            raise SchemaError(f"vertex element lacks property {axis!r}", lineno)
    has_color = all(c in names for c in ("red", "green", "blue"))

    body = iter(range(lineno + 1, len(lines) + 1))
    pts, cols = [], []
    for name, count, props in elements:
        for _ in range(count):
            for lineno in body:
                tokens = lines[lineno - 1].split()
                if tokens:
                    break
            else:
                raise ParseError(f"unexpected end of file in element {name!r}", len(lines))
            values, pos = {}, 0
            for prop, is_list in props:
                if pos >= len(tokens):
                    raise ParseError(f"too few values for element {name!r}", lineno)
                if is_list:
                    n = _int(tokens[pos], lineno)
                    if n < 0 or pos + 1 + n > len(tokens):
                        raise ParseError(f"bad list length for property {prop!r}", lineno)
                    pos += 1 + n
                else:
                    values[prop] = tokens[pos]
                    pos += 1
            if pos != len(tokens):
                raise ParseError(f"too many values for element {name!r}", lineno)
            if name == "vertex":
                pts.append([_float(values[a], lineno) for a in "xyz"])
                if has_color:
                    rgb = [_float(values[c], lineno) for c in ("red", "green", "blue")]
                    if any(c < 0 or c > 255 for c in rgb):
                        raise ParseError("color components must lie in [0, 255]", lineno)
                    cols.append(rgb)
    if not pts:
        raise ParseError("PLY file has no vertices", lineno)
    return PointCloud(np.array(pts), np.array(cols) if has_color else None)


# ---------------------------------------------------------------------- sampling

def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed``."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.Generator(np.random.Philox(key=int(seed)))


def sample_mesh(mesh: TriangleMesh, n: int, seed: int) -> PointCloud:
    """Draw ``n`` points uniformly over the mesh surface.

    A triangle is picked with probability proportional to its area, then a
    point inside it by uniform barycentric sampling.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if not total > 0:
        raise NumericError("mesh has no triangle with positive area")
    rng = make_rng(seed)
    cdf = np.cumsum(areas) / total
    tri = np.searchsorted(cdf, rng.random(n), side="right")
    tri = np.minimum(tri, len(areas) - 1)
    u, v = rng.random((2, n))
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    f = mesh.faces[tri]
    a, b, c = (mesh.vertices[f[:, k]] for k in range(3))
    return PointCloud(a + u[:, None] * (b - a) + v[:, None] * (c - a))


# ------------------------------------------------------------------------ files

def read_point_cloud(path: str | Path, samples: int = 10000, seed: int = 0) -> PointCloud:
    """Load any supported file as a point cloud; OFF meshes are surface-sampled."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in SUPPORTED_SUFFIXES:
        raise DataError(f"{path}: unsupported file type {suffix!r}")
    data = path.read_bytes()
    try:
        if suffix == ".off":
            return sample_mesh(parse_off(data), samples, seed)
        if suffix == ".ply":
            return parse_ply_ascii(data)
        return parse_xyz(data)
    except ParseError as exc:
        raise type(exc)(f"{path}: {exc.reason}", exc.line) from None


def write_xyz(path: str | Path, cloud: PointCloud) -> None:
    Path(path).write_text(format_xyz(cloud))
