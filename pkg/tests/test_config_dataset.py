import pytest

from orthonet.config import Config, ConfigError, load_config
from orthonet.dataset import list_objects, load_dataset, object_id
from orthonet.errors import DataError
from orthonet.synthetic import FAMILIES, make_shape, write_dataset


def test_config_defaults_and_ranges():
    c = Config()
    assert (c.resolution, c.pooling, c.distance, c.tau, c.breakpoint, c.window_multiplier,
            c.mesh_samples) == (150, "avg", "chi2", 0.67, 100, 3, 10000)
    for bad in ({"resolution": 10}, {"pooling": "sum"}, {"tau": 1.5}, {"embedder": "cnn"},
                {"pool_side": 200}, {"views": "front=YoZ,top=YoZ,side=XoZ"}):
        with pytest.raises(ConfigError):
            Config(**bad)


def test_config_precedence(tmp_path, monkeypatch):
    env = tmp_path / "env.cfg"
    env.write_text("# defaults\nresolution=60\ntau=0.5\n")
    local = tmp_path / "local.cfg"
    local.write_text("tau=0.6\nshuffle_categories=yes\n")
    monkeypatch.setenv("ORTHONET_CONFIG", str(env))
    c = load_config(local, {"pooling": "max", "seed": None})
    assert (c.resolution, c.tau, c.shuffle_categories, c.pooling) == (60, 0.6, True, "max")
    local.write_text("colour=blue\n")
    with pytest.raises(ConfigError):
        load_config(local)
    local.write_text("resolution=big\n")
    with pytest.raises(ConfigError):
        load_config(local)
    assert Config.from_mapping(dict(line.split("=", 1) for line in c.to_text().split("\n") if line)) == c


def test_dataset_layout(tmp_path):
    root = write_dataset(tmp_path / "ds", per_class=2, families=("box", "ring"), n_points=300,
                         test_per_class=1)
    objs = list_objects(root)
    assert list(objs) == ["box", "ring"] and len(objs["box"]) == 3
    train = list_objects(root, "train")
    assert [p.name for p in train["ring"]] == ["ring_0000.xyz", "ring_0001.xyz"]
    assert object_id(root, objs["box"][0]) == "box/box_0000"
    cfg = Config(resolution=30, pool_side=5)
    serial = load_dataset(root, cfg, "test")
    parallel = load_dataset(root, cfg, "test", jobs=2)
    for lab in serial.labels:
        for a, b in zip(serial.categories[lab], parallel.categories[lab]):
            assert a.key == b.key and a.descriptor.feature.tobytes() == b.descriptor.feature.tobytes()
    with pytest.raises(DataError):
        list_objects(tmp_path / "missing")
    with pytest.raises(DataError):
        list_objects(root, "validation")


def test_synthetic_shapes_deterministic():
    for fam in FAMILIES:
        a, b = make_shape(fam, 3, 200), make_shape(fam, 3, 200)
        assert a.points.tobytes() == b.points.tobytes()
    with pytest.raises(ValueError):
        make_shape("teapot", 0)
