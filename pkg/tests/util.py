"""Shared generators for the test suite."""
import numpy as np

from orthonet.pointcloud_io import PointCloud, make_rng
from orthonet.synthetic import random_rotation


def blob_cloud(seed: int, clusters: int = 3, per: int = 300) -> PointCloud:
    """Sum of anisotropic Gaussian clusters: asymmetric, generically non-degenerate."""
    rng = make_rng(seed)
    parts = []
    for _ in range(clusters):
        a = rng.normal(size=(3, 3)) * rng.uniform(0.2, 1.0)
        parts.append(rng.normal(size=(per, 3)) @ a + rng.normal(size=3) * 1.5)
    return PointCloud(np.vstack(parts))


def rigid(cloud: PointCloud, rng) -> PointCloud:
    r = random_rotation(rng)
    return PointCloud(cloud.points @ r.T + rng.uniform(-10, 10, 3))


# acceptance outcomes, printed by the terminal-summary hook in conftest.py
ACCEPTANCE: list[str] = []


def report(criterion: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}. {title}: {detail}")
    print(ACCEPTANCE[-1])
    assert ok, detail
