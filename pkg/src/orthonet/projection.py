"""Orthographic views of a frame-aligned cloud and their bin-grid images."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError
from .reference_frame import _points


class Plane(str, enum.Enum):
    """Projection planes; the value names the two frame axes that survive."""

    XoZ = "XoZ"
    YoZ = "YoZ"
    XoY = "XoY"

    @property
    def axes(self) -> tuple[int, int]:
        return _PLANE_AXES[self]


_PLANE_AXES = {Plane.XoZ: (0, 2), Plane.YoZ: (1, 2), Plane.XoY: (0, 1)}


@dataclass(frozen=True, eq=False)
class ProjectedView:
    plane: Plane
    points2d: np.ndarray
    side: float

    def mirrored_axes(self, axes) -> "ProjectedView":
        """Reflect u -> side - u along every listed frame axis this view shows."""
        pts = self.points2d.copy()
        for col, axis in enumerate(self.plane.axes):
            if axis in axes:
                pts[:, col] = self.side - pts[:, col]
        return ProjectedView(self.plane, pts, self.side)


@dataclass(frozen=True, eq=False)
class ProjectionImage:
    bins: np.ndarray
    plane: Plane

    @property
    def resolution(self) -> int:
        return self.bins.shape[0]


@dataclass(frozen=True)
class SignResolution:
    """Outcome of sign disambiguation.

    ``r_x``/``r_y`` are the correlations before any flip, ``mirrored`` is
    ``s < 0``, and ``flipped`` lists the frame axes that were negated.
    """

    r_x: float
    r_y: float
    s: float
    mirrored: bool
    flipped: tuple[int, ...] = ()


def aabb_side(cloud) -> float:
    """Largest edge of the axis-aligned bounding box."""
    pts = _points(cloud)
    if len(pts) == 0:
        raise DataError("bounding box of an empty cloud")
    side = float((pts.max(axis=0) - pts.min(axis=0)).max())
    if not side > 0:
        raise NumericError("all points coincide: bounding box has zero extent")
    return side


def project_views(cloud, side: float) -> dict[Plane, ProjectedView]:
    """Drop one frame axis per plane and shift the survivors by side/2.

    Coordinates falling outside [0, side] (possible when the centroid is far
    from the box centre) are clamped onto the plane border.
    """
    if not side > 0:
        raise NumericError("projection plane side must be positive")
    pts = _points(cloud)
    views = {}
    for plane in Plane:
        uv = pts[:, plane.axes] + side / 2
        np.clip(uv, 0.0, side, out=uv)
        views[plane] = ProjectedView(plane, uv, side)
    return views


def pearson(points2d) -> float:
    """Pearson correlation of a 2D scatter; 0 when either marginal is constant."""
    pts = np.asarray(points2d, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DataError(f"expected (n, 2) points, got shape {pts.shape}")
    if len(pts) < 2:
        raise DataError("correlation needs at least 2 points")
    d = pts - pts.mean(axis=0)
    saa = float(d[:, 0] @ d[:, 0])
    sbb = float(d[:, 1] @ d[:, 1])
    if saa <= 0.0 or sbb <= 0.0:
        return 0.0
    r = float(d[:, 0] @ d[:, 1]) / np.sqrt(saa * sbb)
    return float(min(1.0, max(-1.0, r)))


SIGN_RULES = ("axes", "product")
SIGN_GRID = 16
_R_EPS = 1e-9


def _bin_indices(view: ProjectedView, resolution: int) -> np.ndarray:
    idx = np.floor(view.points2d / view.side * resolution).astype(np.int64)
    np.clip(idx, 0, resolution - 1, out=idx)
    return idx


def occupied_cells(view: ProjectedView, grid: int = SIGN_GRID) -> np.ndarray:
    """Centres of the distinct ``grid`` x ``grid`` cells the view touches, in view units."""
    idx = _bin_indices(view, grid)
    flat = np.unique(idx[:, 0] * grid + idx[:, 1])
    cells = np.column_stack([flat // grid, flat % grid]) + 0.5
    return cells * (view.side / grid)


def view_correlation(view: ProjectedView, grid: int = SIGN_GRID) -> float:
    """Pearson correlation of the view's silhouette scatter (its occupied cells).

    The raw projected points cannot be used: in the principal-axis frame
    their covariance is diagonal, so their correlation is always zero.
    Values within 1e-9 of zero count as zero. A view touching a single cell
    has correlation 0.
    """
    cells = occupied_cells(view, grid)
    if len(cells) < 2:
        return 0.0
    r = pearson(cells)
    return 0.0 if abs(r) <= _R_EPS else r


def disambiguate_sign(views: dict[Plane, ProjectedView], rule: str = "axes",
                      grid: int = SIGN_GRID) -> tuple[SignResolution, dict[Plane, ProjectedView]]:
    """Fix the eigenvector sign ambiguity from the XoZ and YoZ silhouette correlations.

    A flip is always a 180 degree turn about one frame axis, so it negates two
    axes and keeps the frame right-handed. Turning about X negates r_x and
    leaves r_y; turning about Y does the opposite.

    ``rule="axes"`` turns until r_x >= 0 and r_y >= 0, which fixes both sign
    bits. ``rule="product"`` only acts when s = r_x * r_y < 0 and turns about X.
    Under both rules the result satisfies s >= 0 and a second call is a no-op.
    """
    if rule not in SIGN_RULES:
        raise ValueError(f"unknown sign rule {rule!r}")
    for plane in (Plane.XoZ, Plane.YoZ):
        if len(views[plane].points2d) < 2:
            raise DataError("sign disambiguation needs at least 2 points per view")
    r_x = view_correlation(views[Plane.XoZ], grid)
    r_y = view_correlation(views[Plane.YoZ], grid)
    s = r_x * r_y
    flips: set[int] = set()
    if rule == "axes":
        if r_x < 0:
            flips ^= {1, 2}
        if r_y < 0:
            flips ^= {0, 2}
    elif s < 0:
        flips = {1, 2}
    res = SignResolution(r_x, r_y, s, s < 0, tuple(sorted(flips)))
    if not flips:
        return res, dict(views)
    return res, {p: v.mirrored_axes(flips) for p, v in views.items()}


RASTER_MODES = ("density", "binary")


def rasterize(view: ProjectedView, resolution: int, mode: str = "density") -> ProjectionImage:
    """Bin a view into a ``resolution`` x ``resolution`` grid that sums to 1.

    ``bins[i, j]`` counts points with floor(alpha / side * R) == i and
    floor(beta / side * R) == j; coordinates equal to ``side`` fall in the last
    bin. ``mode="binary"`` counts each occupied bin once before normalising.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if mode not in RASTER_MODES:
        raise ValueError(f"unknown raster mode {mode!r}")
    if len(view.points2d) == 0:
        raise DataError("cannot rasterize an empty view")
    idx = _bin_indices(view, resolution)
    counts = np.bincount(idx[:, 0] * resolution + idx[:, 1], minlength=resolution * resolution)
    bins = counts.astype(np.float64)
    if mode == "binary":
        bins = (bins > 0).astype(np.float64)
    bins /= bins.sum()
    return ProjectionImage(bins.reshape(resolution, resolution), view.plane)


def image_to_pgm(image: ProjectionImage) -> bytes:
    """Plain PGM (P2, maxval 255) scaled by the largest bin; beta runs upward."""
    top = image.bins.max()
    scaled = np.rint(image.bins / top * 255).astype(int) if top > 0 else np.zeros_like(image.bins, int)
    rows = scaled.T[::-1]
    r = image.resolution
    lines = [f"P2\n{r} {r}\n255\n"] + [" ".join(map(str, row)) + "\n" for row in rows]
    return "".join(lines).encode("ascii")


def image_to_float32(image: ProjectionImage) -> bytes:
    """Flat little-endian float32 record of the bins, row-major."""
    return image.bins.astype("<f4").tobytes()
