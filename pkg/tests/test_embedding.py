import numpy as np
import pytest

from orthonet.config import Config
from orthonet.embedding import (ExternalFeatures, ObjectDescriptor, RawEmbedder, describe_object,
                                embed_raw, load_external_embeddings, pool,
                                save_external_embeddings)
from orthonet.errors import DataError
from orthonet.learner import chi2
from orthonet.pointcloud_io import PointCloud, make_rng
from orthonet.projection import Plane, ProjectionImage
from util import blob_cloud, rigid


def _image(bins):
    return ProjectionImage(np.asarray(bins, float), Plane.XoY)


def test_embed_raw_examples():
    bins = make_rng(1).uniform(size=(6, 6))
    bins /= bins.sum()
    img = _image(bins)
    assert np.array_equal(embed_raw(img, 6), bins.ravel())
    assert embed_raw(img, 1).tolist() == pytest.approx([1.0])
    quad = np.zeros((4, 4))
    quad[:2, :2] = 0.25
    assert embed_raw(_image(quad), 2).tolist() == [1, 0, 0, 0]
    for p in (2, 4, 5):
        assert embed_raw(img, p).sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        embed_raw(img, 0)
    with pytest.raises(ValueError):
        embed_raw(img, 7)


def test_embed_raw_uneven_blocks():
    img = _image(np.arange(25, dtype=float).reshape(5, 5))
    out = embed_raw(img, 2).reshape(2, 2)
    # edges at floor(k * 5 / 2) = 0, 2, 5
    assert out[0, 0] == img.bins[:2, :2].sum()
    assert out[1, 1] == img.bins[2:, 2:].sum()


def test_pool_examples():
    assert pool([1, 0], [0, 1], [0, 0], "max").tolist() == [1, 1]
    assert pool([1, 0], [0, 1], [0.5, 0.5], "avg").tolist() == [0.5, 0.5]
    v = [0.2, 0.3, 0.5]
    for mode in ("max", "avg"):
        assert pool(v, v, v, mode) == pytest.approx(v, abs=1e-16)
    with pytest.raises(DataError):
        pool([1, 0], [1], [0, 1])


def test_pool_bounds():
    rng = make_rng(3)
    for _ in range(100):
        a, b, c = rng.uniform(size=(3, 8))
        mx, av = pool(a, b, c, "max"), pool(a, b, c, "avg")
        stack = np.vstack([a, b, c])
        assert np.all(mx >= stack.max(axis=0) - 0) and np.all(mx <= stack.max(axis=0))
        assert np.all(av >= stack.min(axis=0) - 1e-15) and np.all(av <= stack.max(axis=0) + 1e-15)


def test_descriptor_validation():
    with pytest.raises(DataError):
        ObjectDescriptor(np.array([-0.1, 1.1]), "avg", "x")
    with pytest.raises(ValueError):
        ObjectDescriptor(np.array([1.0]), "sum", "x")


def test_describe_object_examples():
    cloud = blob_cloud(4)
    cfg = Config(resolution=30, pool_side=30)
    desc, frame = describe_object(cloud, cfg)
    assert desc.dim == 900 and desc.embedder_id == RawEmbedder(30, 30).id
    assert desc.feature.sum() == pytest.approx(1.0, abs=1e-9)
    scaled, _ = describe_object(PointCloud(cloud.points * 3), cfg)
    assert np.abs(scaled.feature - desc.feature).max() <= 1e-9
    again, frame2 = describe_object(cloud, cfg)
    assert again.feature.tobytes() == desc.feature.tobytes()
    assert frame2.to_record() == frame.to_record()


def test_describe_object_rigid():
    cloud = blob_cloud(12)
    desc, _ = describe_object(cloud)
    rng = make_rng(77)
    worst = max(chi2(desc.feature, describe_object(rigid(cloud, rng))[0].feature) for _ in range(10))
    assert worst <= 0.02


def test_pose_tracks_rotation():
    cloud = blob_cloud(12)
    _, f = describe_object(cloud)
    rng = make_rng(5)
    from orthonet.synthetic import random_rotation
    r = random_rotation(rng)
    _, g = describe_object(PointCloud(cloud.points @ r.T))
    assert np.allclose(g.axes, f.axes @ r.T, atol=1e-6)


def _records(n, dim, seed=0):
    rng = make_rng(seed)
    return {f"obj{i // 3}/{('front', 'top', 'side')[i % 3]}": rng.uniform(size=dim) for i in range(n)}


@pytest.mark.parametrize("suffix", [".txt", ".bin"])
def test_external_round_trip(tmp_path, suffix):
    feats = _records(3, 1280)
    path = tmp_path / f"emb{suffix}"
    save_external_embeddings(path, feats)
    loaded = load_external_embeddings(path)
    assert len(loaded) == 3
    tol = 1e-7 if suffix == ".bin" else 0
    for k, v in feats.items():
        assert np.allclose(loaded[k], v, rtol=tol, atol=0)


def test_external_errors(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert load_external_embeddings(empty) == {}
    bad = tmp_path / "mix.txt"
    bad.write_text("a/front\t2\t0 1\na/top\t3\t0 1 2\n")
    with pytest.raises(DataError, match="a/top"):
        load_external_embeddings(bad)
    bad.write_text("a/front\t2\t0 -1\n")
    with pytest.raises(DataError, match="negative"):
        load_external_embeddings(bad)
    bad.write_text("a/front\t2\t0 1\na/front\t2\t0 1\n")
    with pytest.raises(DataError, match="duplicate"):
        load_external_embeddings(bad)
    bad.write_text("a/back\t2\t0 1\n")
    with pytest.raises(DataError):
        load_external_embeddings(bad)
    dims = tmp_path / "dims.bin"
    save_external_embeddings(dims, {"a/front": np.ones(1280), "b/front": np.ones(4096)})
    with pytest.raises(DataError, match="dimension"):
        load_external_embeddings(dims)


def test_external_describe(tmp_path):
    feats = _records(6, 4)
    path = tmp_path / "e.txt"
    save_external_embeddings(path, feats)
    ext = ExternalFeatures.load(path)
    assert ext.object_ids() == ["obj0", "obj1"] and ext.dim == 4
    d = ext.describe("obj1", "max")
    want = np.max([feats[f"obj1/{v}"] for v in ("front", "top", "side")], axis=0)
    assert np.allclose(d.feature, want)
    with pytest.raises(DataError):
        ext.describe("obj9")
