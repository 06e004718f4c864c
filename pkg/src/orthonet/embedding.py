"""Per-view embedding, view pooling and the end-to-end object descriptor.

The network stage is an interface: anything with ``id``, ``dim`` and
``embed(image)`` can be plugged in. :class:`RawEmbedder` is the built-in
deterministic choice; precomputed features (e.g. from a CNN) are ingested
through :func:`load_external_embeddings`.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .config import VIEW_NAMES, Config
from .errors import DataError
from .projection import (ProjectionImage, SignResolution, aabb_side, disambiguate_sign,
                         project_views, rasterize)
from .reference_frame import DegenerateFrame, ReferenceFrame, build_reference_frame, transform_to_frame

POOLING_MODES = ("max", "avg")


def check_feature(values) -> np.ndarray:
    """Validate a feature vector: 1-D, finite, non-negative."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise DataError(f"feature vector must be 1-D and non-empty, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise DataError("feature vector has non-finite entries")
    if (v < 0).any():
        raise DataError("feature vector has negative entries")
    return v


@dataclass(frozen=True, eq=False)
class ObjectDescriptor:
    """A pooled global feature; comparable only with matching embedder and pooling."""

    feature: np.ndarray
    pooling: str
    embedder_id: str

    def __post_init__(self):
        v = check_feature(self.feature)
        v.setflags(write=False)
        object.__setattr__(self, "feature", v)
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"unknown pooling mode {self.pooling!r}")

    @property
    def dim(self) -> int:
        return len(self.feature)


class Embedder(Protocol):
    id: str
    dim: int

    def embed(self, image: ProjectionImage) -> np.ndarray: ...


def _block_edges(n: int, blocks: int) -> np.ndarray:
    return (np.arange(blocks + 1) * n) // blocks


def embed_raw(image: ProjectionImage, pool_side: int) -> np.ndarray:
    """Sum-pool the image into ``pool_side`` x ``pool_side`` blocks, flattened row-major.

    Block edges sit at floor(k * R / pool_side), so every block is non-empty
    and block sizes differ by at most one.
    """
    r = image.resolution
    if not 1 <= pool_side <= r:
        raise ValueError(f"pool_side must be in [1, {r}], got {pool_side}")
    starts = _block_edges(r, pool_side)[:-1]
    pooled = np.add.reduceat(np.add.reduceat(image.bins, starts, axis=0), starts, axis=1)
    return pooled.ravel()


@dataclass(frozen=True)
class RawEmbedder:
    pool_side: int = 15
    resolution: int = 150
    raster: str = "density"

    @property
    def id(self) -> str:
        return f"raw-p{self.pool_side}-r{self.resolution}-{self.raster}"

    @property
    def dim(self) -> int:
        return self.pool_side * self.pool_side

    def embed(self, image: ProjectionImage) -> np.ndarray:
        return embed_raw(image, self.pool_side)


def pool(v_front, v_top, v_side, mode: str = "avg") -> np.ndarray:
    """Element-wise max or mean of the three view vectors."""
    stack = [np.asarray(v, dtype=np.float64) for v in (v_front, v_top, v_side)]
    if len({v.shape for v in stack}) != 1 or stack[0].ndim != 1:
        raise DataError("view vectors must share one 1-D shape")
    if mode == "max":
        return np.maximum(np.maximum(stack[0], stack[1]), stack[2])
    if mode == "avg":
        return (stack[0] + stack[1] + stack[2]) / 3.0
    raise ValueError(f"unknown pooling mode {mode!r}")


@dataclass(frozen=True, eq=False)
class ObjectViews:
    """Intermediate products of the view pipeline, keyed by view name."""

    frame: ReferenceFrame
    side: float
    sign: SignResolution
    images: dict[str, ProjectionImage]


def compute_views(cloud, config: Config = Config()) -> ObjectViews:
    """Frame, transform, bounding box, views, sign resolution and rasterisation.

    The returned frame already carries the resolved axis signs, so it is the
    pose estimate of the object.
    """
    try:
        frame = build_reference_frame(cloud)
    except DegenerateFrame as exc:
        if config.degenerate != "tiebreak":
            raise
        frame = exc.frame
    local = transform_to_frame(cloud, frame)
    side = aabb_side(local)
    sign, views = disambiguate_sign(project_views(local, side), config.sign_rule,
                                    config.sign_grid)
    images = {name: rasterize(views[plane], config.resolution, config.raster)
              for name, plane in config.view_binding.items()}
    return ObjectViews(frame.flipped(sign.flipped), side, sign, images)


def describe_object(cloud, config: Config = Config(),
                    embedder: Embedder | None = None) -> tuple[ObjectDescriptor, ReferenceFrame]:
    """Full descriptor pipeline; returns the pooled descriptor and the object pose."""
    if embedder is None:
        embedder = RawEmbedder(config.pool_side, config.resolution, config.raster)
    ov = compute_views(cloud, config)
    vecs = [check_feature(embedder.embed(ov.images[name])) for name in VIEW_NAMES]
    if any(len(v) != embedder.dim for v in vecs):
        raise DataError(f"embedder {embedder.id} returned vectors not of dimension {embedder.dim}")
    feature = pool(*vecs, mode=config.pooling)
    return ObjectDescriptor(feature, config.pooling, embedder.id), ov.frame


# ------------------------------------------------------------ external features

_U32 = struct.Struct("<I")


def _check_record(key: str, vec: np.ndarray, dim: int | None, where: str) -> None:
    if dim is not None and len(vec) != dim:
        raise DataError(f"{where}: record {key!r} has dimension {len(vec)}, expected {dim}")
    if not np.isfinite(vec).all():
        raise DataError(f"{where}: record {key!r} has non-finite values")
    if (vec < 0).any():
        raise DataError(f"{where}: record {key!r} has negative values")


def format_record(key: str, vec) -> str:
    """One text record: ``key<TAB>D<TAB>v1 v2 ... vD``."""
    if "\t" in key or "\n" in key:
        raise DataError(f"record key {key!r} contains a tab or newline")
    vals = np.asarray(vec, dtype=np.float64)
    return f"{key}\t{len(vals)}\t{' '.join(repr(float(x)) for x in vals)}\n"


def read_records_text(text: str, where: str = "<text>") -> list[tuple[str, np.ndarray]]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{where}:{lineno}: expected key<TAB>D<TAB>values")
        key, dim_s, vals = parts
        try:
            dim = int(dim_s)
            vec = np.array([float(t) for t in vals.split()], dtype=np.float64)
        except ValueError:
            raise DataError(f"{where}:{lineno}: non-numeric field in record {key!r}") from None
        if len(vec) != dim:
            raise DataError(f"{where}:{lineno}: record {key!r} declares D={dim} but has {len(vec)} values")
        records.append((key, vec))
    return records


def write_records_binary(records) -> bytes:
    """Little-endian records: u32 key length, key bytes, u32 D, D float32 values."""
    out = bytearray()
    for key, vec in records:
        kb = key.encode("utf-8")
        v = np.asarray(vec, dtype="<f4")
        out += _U32.pack(len(kb)) + kb + _U32.pack(len(v)) + v.tobytes()
    return bytes(out)


def read_records_binary(data: bytes, where: str = "<bytes>") -> list[tuple[str, np.ndarray]]:
    records, pos, n = [], 0, len(data)
    while pos < n:
        if pos + 4 > n:
            raise DataError(f"{where}: truncated record header at byte {pos}")
        (klen,) = _U32.unpack_from(data, pos)
        pos += 4
        if pos + klen + 4 > n:
            raise DataError(f"{where}: truncated record key at byte {pos}")
        try:
            key = data[pos:pos + klen].decode("utf-8")
        except UnicodeDecodeError:
            raise DataError(f"{where}: record key at byte {pos} is not UTF-8") from None
        pos += klen
        (dim,) = _U32.unpack_from(data, pos)
        pos += 4
        if pos + 4 * dim > n:
            raise DataError(f"{where}: record {key!r} truncated")
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=pos).astype(np.float64)
        pos += 4 * dim
        records.append((key, vec))
    return records


def _is_binary_path(path: Path, fmt: str | None) -> bool:
    if fmt is not None:
        if fmt not in ("text", "binary"):
            raise ValueError(f"unknown embedding format {fmt!r}")
        return fmt == "binary"
    return path.suffix.lower() == ".bin"


def load_external_embeddings(path: str | Path, fmt: str | None = None) -> dict[str, np.ndarray]:
    """Load per-view features keyed ``objectid/front|top|side``.

    Files ending in ``.bin`` (or ``fmt="binary"``) use the binary record
    layout; anything else is read as text records. All vectors must share one
    dimension and be non-negative; keys must be unique.
    """
    path = Path(path)
    where = str(path)
    if _is_binary_path(path, fmt):
        records = read_records_binary(path.read_bytes(), where)
    else:
        records = read_records_text(path.read_text(encoding="utf-8"), where)
    out: dict[str, np.ndarray] = {}
    dim = None
    for key, vec in records:
        obj, sep, view = key.rpartition("/")
        if not sep or not obj or view not in VIEW_NAMES:
            raise DataError(f"{where}: record key {key!r} is not objectid/front|top|side")
        if key in out:
            raise DataError(f"{where}: duplicate record {key!r}")
        _check_record(key, vec, dim, where)
        dim = len(vec)
        out[key] = vec
    return out


def save_external_embeddings(path: str | Path, features: dict[str, np.ndarray],
                             fmt: str | None = None) -> None:
    path = Path(path)
    items = sorted(features.items())
    if _is_binary_path(path, fmt):
        path.write_bytes(write_records_binary(items))
    else:
        path.write_text("".join(format_record(k, v) for k, v in items), encoding="utf-8")


@dataclass(frozen=True, eq=False)
class ExternalFeatures:
    """Precomputed per-view features looked up by object id."""

    features: dict[str, np.ndarray]
    source: str = "external"

    @classmethod
    def load(cls, path: str | Path) -> "ExternalFeatures":
        return cls(load_external_embeddings(path), f"external:{Path(path).name}")

    @property
    def id(self) -> str:
        return self.source

    @property
    def dim(self) -> int | None:
        return len(next(iter(self.features.values()))) if self.features else None

    def object_ids(self) -> list[str]:
        return sorted({k.rpartition("/")[0] for k in self.features})

    def describe(self, object_id: str, pooling: str = "avg") -> ObjectDescriptor:
        try:
            vecs = [self.features[f"{object_id}/{name}"] for name in VIEW_NAMES]
        except KeyError as exc:
            raise DataError(f"no external feature {exc.args[0]!r}") from None
        return ObjectDescriptor(pool(*vecs, mode=pooling), pooling, self.id)
