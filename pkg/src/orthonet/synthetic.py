"""Procedural shape families for demos and end-to-end checks.

Each instance gets jittered dimensions, surface sampling noise and a random
rigid pose, all drawn from a seeded generator.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .pointcloud_io import PointCloud, TriangleMesh, make_rng, sample_mesh, write_xyz

FAMILIES = ("box", "sphere", "cylinder", "lshape", "ring", "plane")


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix (QR of a Gaussian matrix, det +1)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _grid_mesh(fn, nu: int, nv: int, wrap_u: bool, wrap_v: bool) -> TriangleMesh:
    """Triangulate a parametric surface fn(u, v) sampled on a regular grid."""
    us = np.linspace(0, 1, nu, endpoint=not wrap_u)
    vs = np.linspace(0, 1, nv, endpoint=not wrap_v)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    verts = fn(uu.ravel(), vv.ravel())
    faces = []
    iu = range(nu if wrap_u else nu - 1)
    iv = range(nv if wrap_v else nv - 1)
    for i in iu:
        for j in iv:
            a = i * nv + j
            b = ((i + 1) % nu) * nv + j
            c = ((i + 1) % nu) * nv + (j + 1) % nv
            d = i * nv + (j + 1) % nv
            faces += [(a, b, c), (a, c, d)]
    faces = np.array(faces)
    keep = ((faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2]))
    return TriangleMesh(verts, faces[keep])


def _box_mesh(dx, dy, dz, offset=(0.0, 0.0, 0.0)) -> TriangleMesh:
    corners = np.array([[x, y, z] for x in (0, dx) for y in (0, dy) for z in (0, dz)], float)
    corners += np.asarray(offset) - np.array([dx, dy, dz]) / 2
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = [(a, b, c) for a, b, c, d in quads] + [(a, c, d) for a, b, c, d in quads]
    return TriangleMesh(corners, faces)


def _merge(*meshes: TriangleMesh) -> TriangleMesh:
    verts, faces, base = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + base)
        base += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(faces))


def shape_mesh(family: str, rng: np.random.Generator) -> TriangleMesh:
    j = lambda: rng.uniform(0.9, 1.1)  # noqa: E731
    if family == "box":
        return _box_mesh(1.0 * j(), 0.65 * j(), 0.4 * j())
    if family == "plane":
        return _box_mesh(1.0 * j(), 0.7 * j(), 0.02 * j())
    if family == "lshape":
        w, t = 0.3 * j(), 0.3 * j()
        a, b = 1.0 * j(), 0.7 * j()
        return _merge(_box_mesh(a, w, t, (a / 2, w / 2, 0)),
                      _box_mesh(w, b, t, (w / 2, w + b / 2, 0)))
    if family == "sphere":
        rx, ry, rz = 0.5 * j(), 0.5 * j(), 0.5 * j()

        def fn(u, v):
            th, ph = np.pi * u, 2 * np.pi * v
            return np.column_stack([rx * np.sin(th) * np.cos(ph), ry * np.sin(th) * np.sin(ph), rz * np.cos(th)])
        return _grid_mesh(fn, 24, 32, False, True)
    if family == "cylinder":
        rx, ry, h = 0.25 * j(), 0.25 * j(), 1.0 * j()

        def fn(u, v):
            ph = 2 * np.pi * v
            return np.column_stack([rx * np.cos(ph), ry * np.sin(ph), h * (u - 0.5)])
        return _grid_mesh(fn, 8, 32, False, True)
    if family == "ring":
        big, small, squash = 0.5 * j(), 0.12 * j(), 0.85 * j()

        def fn(u, v):
            th, ph = 2 * np.pi * u, 2 * np.pi * v
            rad = big + small * np.cos(ph)
            return np.column_stack([rad * np.cos(th), squash * rad * np.sin(th), small * np.sin(ph)])
        return _grid_mesh(fn, 48, 16, True, True)
    raise ValueError(f"unknown shape family {family!r}")


def make_shape(family: str, seed: int, n_points: int = 1500, noise: float = 0.004,
               posed: bool = True) -> PointCloud:
    """One jittered, noisy, randomly posed instance of ``family``."""
    rng = make_rng(seed)
    mesh = shape_mesh(family, rng)
    pts = sample_mesh(mesh, n_points, int(rng.integers(2**31))).points
    pts = pts + noise * rng.standard_normal(pts.shape)
    if posed:
        pts = pts @ random_rotation(rng).T * rng.uniform(0.5, 2.0) + rng.uniform(-3, 3, 3)
    return PointCloud(pts)


def write_dataset(root: str | Path, per_class: int = 20, families=FAMILIES, seed: int = 0,
                  n_points: int = 1500, test_per_class: int = 0) -> Path:
    """Write ``root/<family>/<family>_NNNN.xyz`` and, when ``test_per_class``
    is set, ``root/splits/{train,test}.txt``."""
    root = Path(root)
    train, test = [], []
    for fi, fam in enumerate(families):
        (root / fam).mkdir(parents=True, exist_ok=True)
        for i in range(per_class + test_per_class):
            rel = f"{fam}/{fam}_{i:04d}.xyz"
            write_xyz(root / rel, make_shape(fam, seed * 100003 + fi * 10007 + i, n_points))
            (train if i < per_class else test).append(rel)
    if test_per_class:
        (root / "splits").mkdir(exist_ok=True)
        (root / "splits" / "train.txt").write_text("\n".join(train) + "\n")
        (root / "splits" / "test.txt").write_text("\n".join(test) + "\n")
    return root
