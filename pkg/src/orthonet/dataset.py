"""Dataset discovery (``root/<label>/<files>``) and batch descriptor computation."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path, PurePosixPath

from .config import Config
from .embedding import ExternalFeatures, describe_object
from .errors import DataError
from .pointcloud_io import SUPPORTED_SUFFIXES, read_point_cloud
from .protocol import Instance, LabeledDataset


def object_id(root: Path, path: Path) -> str:
    """Dataset-relative path without suffix, e.g. ``chair/chair_0001``."""
    return PurePosixPath(path.relative_to(root).as_posix()).with_suffix("").as_posix()


def list_objects(root: str | Path, split: str | None = None) -> dict[str, list[Path]]:
    """Label -> sorted object files.

    With ``split`` ("train"/"test") and a ``root/splits/<split>.txt`` file,
    only the listed relative paths are used; the label is the first path
    component.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    split_file = root / "splits" / f"{split}.txt" if split else None
    out: dict[str, list[Path]] = {}
    if split_file is not None and split_file.is_file():
        for lineno, line in enumerate(split_file.read_text().splitlines(), start=1):
            rel = line.strip()
            if not rel or rel.startswith("#"):
                continue
            path = root / rel
            parts = PurePosixPath(rel).parts
            if len(parts) < 2 or not path.is_file():
                raise DataError(f"{split_file}:{lineno}: cannot resolve {rel!r}")
            out.setdefault(parts[0], []).append(path)
        return {lab: sorted(paths) for lab, paths in sorted(out.items())}
    if split is not None:
        raise DataError(f"split file not found: {split_file}")
    for label_dir in sorted(p for p in root.iterdir() if p.is_dir() and p.name != "splits"):
        files = sorted(p for p in label_dir.rglob("*")
                       if p.is_file() and p.suffix.lower() in SUPPORTED_SUFFIXES)
        if files:
            out[label_dir.name] = files
    if not out:
        raise DataError(f"no labelled objects found under {root}")
    return out


def _describe_file(args):
    path, config = args
    cloud = read_point_cloud(path, config.mesh_samples, config.seed)
    return describe_object(cloud, config)[0]


def load_dataset(root: str | Path, config: Config = Config(), split: str | None = None,
                 jobs: int = 1) -> LabeledDataset:
    """Compute descriptors for every object of a dataset directory.

    With an external embedder, features are looked up by object id instead
    of being computed from geometry. Results never depend on ``jobs``.
    """
    root = Path(root)
    objects = list_objects(root, split)
    flat = [(lab, path) for lab, paths in objects.items() for path in paths]
    if config.external_path:
        ext = ExternalFeatures.load(config.external_path)
        descs = [ext.describe(object_id(root, p), config.pooling) for _, p in flat]
    elif jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            descs = list(pool.map(_describe_file, [(p, config) for _, p in flat], chunksize=4))
    else:
        descs = [_describe_file((p, config)) for _, p in flat]
    cats: dict[str, list[Instance]] = {}
    for (lab, path), desc in zip(flat, descs):
        cats.setdefault(lab, []).append(Instance(object_id(root, path), desc))
    return LabeledDataset(cats)


def dataset_from_features(features: ExternalFeatures, pooling: str = "avg") -> LabeledDataset:
    """Dataset straight from an embeddings file; the label is the object id's first component."""
    cats: dict[str, list[Instance]] = {}
    for oid in features.object_ids():
        label = oid.split("/", 1)[0]
        if "/" not in oid:
            raise DataError(f"object id {oid!r} has no label component")
        cats.setdefault(label, []).append(Instance(oid, features.describe(oid, pooling)))
    if not cats:
        raise DataError("embedding file holds no objects")
    return LabeledDataset(cats)
