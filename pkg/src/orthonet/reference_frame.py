"""Principal-axis object reference frame.

The frame origin is the centroid; X and Y are the two leading eigenvectors of
the population covariance and Z = X x Y, so every frame is right-handed.
Eigenvectors come from a cyclic Jacobi solver specialised to 3x3 matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError
from .pointcloud_io import PointCloud

DEGENERACY_TOL = 1e-6
_TINY = 1e-30
_MAX_SWEEPS = 50
_CONVERGENCE = 1e-12
_PAIRS = ((0, 1), (0, 2), (1, 2))


def _points(cloud) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError(f"expected (n, 3) points, got shape {pts.shape}")
    return pts


def centroid(cloud) -> np.ndarray:
    pts = _points(cloud)
    if len(pts) == 0:
        raise DataError("centroid of an empty cloud")
    return pts.mean(axis=0)


def covariance(cloud, c=None) -> np.ndarray:
    """Population (1/n) covariance about ``c`` (the centroid by default)."""
    pts = _points(cloud)
    if len(pts) == 0:
        raise DataError("covariance of an empty cloud")
    d = pts - (centroid(pts) if c is None else np.asarray(c, dtype=np.float64))
    m = d.T @ d / len(pts)
    return (m + m.T) / 2


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Eigenvalues in descending order; ``vectors[:, i]`` pairs with ``values[i]``."""

    values: np.ndarray
    vectors: np.ndarray
    degenerate: bool
    sweeps: int = 0

    def relative_gaps(self) -> tuple[float, float]:
        scale = max(self.values[0], _TINY)
        return ((self.values[0] - self.values[1]) / scale,
                (self.values[1] - self.values[2]) / scale)


def _jacobi3(a: list[list[float]]) -> tuple[list[list[float]], int]:
    """Diagonalise the symmetric 3x3 ``a`` in place; return (rotation, sweeps)."""
    v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    norm = math.sqrt(sum(a[i][j] * a[i][j] for i in range(3) for j in range(3)))
    sweeps = 0
    while sweeps < _MAX_SWEEPS:
        off = math.sqrt(2.0 * (a[0][1] ** 2 + a[0][2] ** 2 + a[1][2] ** 2))
        if off <= _CONVERGENCE * norm:
            break
        sweeps += 1
        for p, q in _PAIRS:
            apq = a[p][q]
            if apq == 0.0:
                continue
            theta = (a[q][q] - a[p][p]) / (2.0 * apq)
            if abs(theta) > 1e150:
                t = 0.5 / theta
            else:
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            r = 3 - p - q
            arp, arq = a[r][p], a[r][q]
            a[r][p] = a[p][r] = c * arp - s * arq
            a[r][q] = a[q][r] = s * arp + c * arq
            a[p][p] -= t * apq
            a[q][q] += t * apq
            a[p][q] = a[q][p] = 0.0
            for k in range(3):
                vkp, vkq = v[k][p], v[k][q]
                v[k][p] = c * vkp - s * vkq
                v[k][q] = s * vkp + c * vkq
    return v, sweeps


def _canonical_sign(vec: np.ndarray) -> np.ndarray:
    # largest-magnitude component positive; first index wins ties
    return -vec if vec[np.argmax(np.abs(vec))] < 0 else vec


def eigen_decompose_sym3(m, tol: float = DEGENERACY_TOL) -> EigenBasis:
    """Eigen-decomposition of a real symmetric 3x3 matrix by cyclic Jacobi sweeps.

    ``tol`` is the relative eigen-gap below which the result is flagged
    degenerate: ``(l1 - l2) / max(l1, 1e-30) <= tol`` or the same for l2, l3.
    """
    arr = np.asarray(m, dtype=np.float64)
    if arr.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NumericError("matrix has non-finite entries")
    scale = max(np.abs(arr).max(), _TINY)
    if np.abs(arr - arr.T).max() > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    a = ((arr + arr.T) / 2).tolist()
    rot, sweeps = _jacobi3(a)
    diag = np.array([a[0][0], a[1][1], a[2][2]])
    vecs = np.array(rot)
    order = np.argsort(-diag, kind="stable")
    values = diag[order]
    vectors = np.column_stack([_canonical_sign(vecs[:, i]) for i in order])
    top = max(values[0], _TINY)
    degenerate = bool((values[0] - values[1]) / top <= tol or (values[1] - values[2]) / top <= tol)
    return EigenBasis(values, vectors, degenerate, sweeps)


@dataclass(frozen=True, eq=False)
class ReferenceFrame:
    """Origin plus orthonormal right-handed axes; ``axes`` rows are X, Y, Z."""

    origin: np.ndarray
    axes: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.axes[0]

    @property
    def y(self) -> np.ndarray:
        return self.axes[1]

    @property
    def z(self) -> np.ndarray:
        return self.axes[2]

    def to_record(self) -> list[float]:
        """Origin, X, Y, Z as 12 numbers, row-major."""
        return [float(v) for v in np.concatenate([self.origin, self.axes.ravel()])]

    @classmethod
    def from_record(cls, values) -> "ReferenceFrame":
        vals = np.asarray(values, dtype=np.float64)
        if vals.shape != (12,):
            raise DataError("a frame record has exactly 12 numbers")
        return cls(vals[:3], vals[3:].reshape(3, 3))

    def flipped(self, axes) -> "ReferenceFrame":
        """Copy with the listed axis indices negated."""
        new = self.axes.copy()
        for i in axes:
            new[i] = -new[i]
        return ReferenceFrame(self.origin, new)


IDENTITY_FRAME = ReferenceFrame(np.zeros(3), np.eye(3))


class DegenerateFrame(NumericError):
    """Principal directions are not unique.

    ``basis`` is the raw decomposition; ``frame`` is the deterministic
    tie-broken frame a caller may choose to proceed with.
    """

    def __init__(self, message: str, basis: EigenBasis, frame: ReferenceFrame):
        super().__init__(message)
        self.basis = basis
        self.frame = frame


def _tie_break(basis: EigenBasis, tol: float) -> np.ndarray:
    """Replace eigenvectors inside near-equal eigenvalue clusters with a canonical basis.

    Within each cluster the standard basis vectors e1, e2, e3 are projected
    onto the cluster's eigenspace in order and Gram-Schmidt orthonormalised,
    so the first chosen vector is the unit vector of the subspace with the
    largest possible first component. The result depends only on the subspace.
    """
    vals, vecs = basis.values, basis.vectors
    top = max(vals[0], _TINY)
    clusters, start = [], 0
    for i in range(1, 4):
        if i == 3 or (vals[i - 1] - vals[i]) / top > tol:
            clusters.append(range(start, i))
            start = i
    out = vecs.copy()
    for cl in clusters:
        if len(cl) == 1:
            continue
        q = vecs[:, list(cl)]
        chosen = []
        for e in np.eye(3):
            w = q @ (q.T @ e)
            for u in chosen:
                w = w - (u @ w) * u
            n = np.linalg.norm(w)
            if n > 1e-6:
                chosen.append(_canonical_sign(w / n))
            if len(chosen) == len(cl):
                break
        out[:, list(cl)] = np.column_stack(chosen)
    return out


def build_reference_frame(cloud, tol: float = DEGENERACY_TOL,
                          allow_degenerate: bool = False) -> ReferenceFrame:
    """Centroid plus principal axes of ``cloud``.

    X and Y signs are arbitrary here; the projection stage fixes them.
    Raises :class:`DegenerateFrame` when the eigen-gaps are within ``tol``
    unless ``allow_degenerate`` is set, in which case the tie-broken frame is
    returned.
    """
    pts = _points(cloud)
    if len(pts) < 3:
        raise DataError(f"a reference frame needs at least 3 points, got {len(pts)}")
    c = centroid(pts)
    basis = eigen_decompose_sym3(covariance(pts, c), tol)
    vecs = _tie_break(basis, tol) if basis.degenerate else basis.vectors
    x = vecs[:, 0] / np.linalg.norm(vecs[:, 0])
    y = vecs[:, 1] - (vecs[:, 1] @ x) * x
    y /= np.linalg.norm(y)
    z = np.cross(x, y)
    z /= np.linalg.norm(z)
    frame = ReferenceFrame(c, np.vstack([x, y, z]))
    if basis.degenerate and not allow_degenerate:
        g12, g23 = basis.relative_gaps()
        raise DegenerateFrame(
            f"principal axes are not unique (relative eigen-gaps {g12:.3g}, {g23:.3g})",
            basis, frame)
    return frame


def transform_to_frame(cloud, frame: ReferenceFrame) -> PointCloud:
    """Express each point as ((p - c).X, (p - c).Y, (p - c).Z)."""
    colors = cloud.colors if isinstance(cloud, PointCloud) else None
    return PointCloud((_points(cloud) - frame.origin) @ frame.axes.T, colors)
