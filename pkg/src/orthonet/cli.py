"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric/degeneracy error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import Config, ConfigError, load_config
from .dataset import dataset_from_features, list_objects, load_dataset
from .embedding import ExternalFeatures, compute_views, describe_object, format_record
from .errors import DataError, NumericError
from .learner import CategoryStore
from .pointcloud_io import parse_off, read_point_cloud, sample_mesh, write_xyz
from .projection import image_to_pgm
from .protocol import (StoreLearner, compute_metrics, metrics_table, offline_eval,
                       run_simulated_teacher)
from .synthetic import FAMILIES, write_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

_FLAG_KEYS = {
    "resolution": "resolution", "pooling": "pooling", "distance": "distance",
    "embedder": "embedder", "tau": "tau", "breakpoint": "breakpoint", "seed": "seed",
    "samples": "mesh_samples", "pool_side": "pool_side", "raster": "raster",
    "sign_rule": "sign_rule", "degenerate": "degenerate",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="key=value config file (overrides $ORTHONET_CONFIG)")
    g.add_argument("--resolution", type=int, help="projection image side in bins (25-225)")
    g.add_argument("--pooling", choices=("max", "avg"))
    g.add_argument("--distance", choices=("chi2", "js"))
    g.add_argument("--embedder", help="raw or external:PATH")
    g.add_argument("--pool-side", type=int, dest="pool_side", help="raw embedder block grid side")
    g.add_argument("--raster", choices=("density", "binary"))
    g.add_argument("--sign-rule", choices=("axes", "product"), dest="sign_rule")
    g.add_argument("--degenerate", choices=("error", "tiebreak"))
    g.add_argument("--tau", type=float)
    g.add_argument("--breakpoint", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--samples", type=int, help="points sampled per OFF mesh")


def _config(args) -> Config:
    overrides = {_FLAG_KEYS[k]: getattr(args, k) for k in _FLAG_KEYS if getattr(args, k, None) is not None}
    return load_config(args.config, overrides)


def _header(out, command: str, cfg: Config) -> None:
    out.write(f"# orthonet {__version__} {command}\n# config {cfg.header()}\n")


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds or min(seeds) < 0:
        raise argparse.ArgumentTypeError("seed list must hold non-negative integers")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orthonet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="descriptor (and pose) of one object file")
    p.add_argument("input")
    p.add_argument("--emit-pose", action="store_true", help="also write the 12-number pose record")
    p.add_argument("--emit-pgm", metavar="DIR", help="write the three projection images as PGM")
    p.add_argument("--object-id", help="lookup key in external mode (default: input path without suffix)")
    _add_config_flags(p)

    p = sub.add_parser("eval-offline", help="teach a training set, report AIA/ACA on a test set")
    p.add_argument("train", help="dataset dir, or an embeddings file in external mode")
    p.add_argument("test", nargs="?", help="dataset dir; omitted: TRAIN/splits/{train,test}.txt")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)

    p = sub.add_parser("eval-openended", help="simulated-teacher protocol over several seeds")
    p.add_argument("dataset", help="dataset dir or embeddings file")
    p.add_argument("--seeds", type=_parse_seeds, default=None, help="comma-separated, e.g. 1,2,3")
    p.add_argument("--log-dir", help="write one experiment log per run here")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)

    p = sub.add_parser("teach", help="interactive teach/correct session on stdin")
    p.add_argument("inputs", nargs="+", help="object files or dataset directories")
    p.add_argument("--store", required=True, help="category store file (loaded if present)")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="write a synthetic labelled dataset of XYZ files")
    p.add_argument("output")
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--test-per-class", type=int, default=0)
    p.add_argument("--points", type=int, default=1500)
    p.add_argument("--families", default=",".join(FAMILIES))
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sample", help="sample an OFF mesh into an XYZ point cloud")
    p.add_argument("mesh")
    p.add_argument("output")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    return parser


# ------------------------------------------------------------------ commands

def cmd_describe(args, out) -> int:
    cfg = _config(args)
    path = Path(args.input)
    cloud = read_point_cloud(path, cfg.mesh_samples, cfg.seed)
    oid = args.object_id or path.with_suffix("").as_posix()
    if cfg.external_path:
        desc = ExternalFeatures.load(cfg.external_path).describe(oid, cfg.pooling)
        frame = describe_object(cloud, cfg)[1]
    else:
        desc, frame = describe_object(cloud, cfg)
    _header(out, "describe", cfg)
    out.write(f"# embedder {desc.embedder_id} pooling {desc.pooling}\n")
    out.write(format_record(oid, desc.feature))
    if args.emit_pose:
        out.write("pose\t" + " ".join(repr(v) for v in frame.to_record()) + "\n")
    if args.emit_pgm:
        pgm_dir = Path(args.emit_pgm)
        pgm_dir.mkdir(parents=True, exist_ok=True)
        for name, image in compute_views(cloud, cfg).images.items():
            (pgm_dir / f"{path.stem}_{name}.pgm").write_bytes(image_to_pgm(image))
    return EXIT_OK


def _load_any(path: str, cfg: Config, split: str | None = None, jobs: int = 1):
    p = Path(path)
    if p.is_file():
        return dataset_from_features(ExternalFeatures.load(p), cfg.pooling)
    return load_dataset(p, cfg, split, jobs)


def cmd_eval_offline(args, out) -> int:
    cfg = _config(args)
    if args.test is None:
        train = _load_any(args.train, cfg, "train", args.jobs)
        test = _load_any(args.train, cfg, "test", args.jobs)
    else:
        train = _load_any(args.train, cfg, jobs=args.jobs)
        test = _load_any(args.test, cfg, jobs=args.jobs)
    report = offline_eval(train, test, cfg)
    _header(out, "eval-offline", cfg)
    out.write(f"# train_instances={len(train)} test_instances={len(test)}\n")
    out.write(report.report())
    return EXIT_OK


def cmd_eval_openended(args, out) -> int:
    cfg = _config(args)
    data = _load_any(args.dataset, cfg, jobs=args.jobs)
    seeds = args.seeds or [cfg.seed]
    rows = []
    log_dir = Path(args.log_dir) if args.log_dir else None
    if log_dir:
        log_dir.mkdir(parents=True, exist_ok=True)
    for run, seed in enumerate(seeds):
        learner = StoreLearner(distance=cfg.distance)
        log = run_simulated_teacher(data, cfg, seed, learner)
        rows.append((seed, compute_metrics(log, learner.store)))
        if log_dir:
            (log_dir / f"run{run:02d}_seed{seed}.tsv").write_text(log.to_text())
    _header(out, "eval-openended", cfg)
    out.write(f"# categories={len(data.labels)} instances={len(data)} seeds={','.join(map(str, seeds))}\n")
    out.write(metrics_table(rows))
    return EXIT_OK


def _teach_objects(inputs: list[str]) -> list[Path]:
    files = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files += [f for paths in list_objects(p).values() for f in paths]
        elif p.is_file():
            files.append(p)
        else:
            raise DataError(f"no such file or directory: {p}")
    return files


def cmd_teach(args, out, inp) -> int:
    cfg = _config(args)
    store_path = Path(args.store)
    store = CategoryStore.load(store_path) if store_path.exists() else CategoryStore(distance=cfg.distance)
    _header(out, "teach", cfg)
    out.write("# commands: teach LABEL | correct LABEL | skip | quit\n")
    try:
        for path in _teach_objects(args.inputs):
            desc, _ = describe_object(read_point_cloud(path, cfg.mesh_samples, cfg.seed), cfg)
            result = store.classify(desc)
            shown = "unknown" if result.unknown else f"{result.label} (OCD {result.distance:.6g})"
            out.write(f"object {path.as_posix()}: {shown}\n")
            while True:
                out.write("> ")
                out.flush()
                line = inp.readline()
                if not line:
                    return _finish_teach(store, store_path, out)
                cmd, _, label = line.strip().partition(" ")
                label = label.strip()
                if cmd in ("teach", "correct") and label and "\t" not in label:
                    store.teach(label, desc)
                    out.write(f"{cmd}: stored as {label!r} (store size {len(store)})\n")
                    break
                if cmd == "skip" and not label:
                    break
                if cmd == "quit" and not label:
                    return _finish_teach(store, store_path, out)
                out.write(f"unrecognised command {line.strip()!r}\n")
    except BaseException:
        if len(store):
            store.save(store_path)
        raise
    return _finish_teach(store, store_path, out)


def _finish_teach(store: CategoryStore, path: Path, out) -> int:
    store.save(path)
    out.write(f"# saved {len(store)} instances in {len(store.labels)} categories to {path}\n")
    return EXIT_OK


def cmd_synth(args, out) -> int:
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    unknown = [f for f in families if f not in FAMILIES]
    if unknown:
        raise ConfigError(f"unknown shape families: {', '.join(unknown)}")
    root = write_dataset(args.output, args.per_class, families, args.seed, args.points, args.test_per_class)
    out.write(f"wrote {len(families)} categories to {root}\n")
    return EXIT_OK


def cmd_sample(args, out) -> int:
    mesh = parse_off(Path(args.mesh).read_bytes())
    cloud = sample_mesh(mesh, args.samples, args.seed)
    write_xyz(args.output, cloud)
    out.write(f"wrote {len(cloud)} points to {args.output}\n")
    return EXIT_OK


def main(argv=None, stdout=None, stdin=None) -> int:
    out = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "describe":
            return cmd_describe(args, out)
        if args.command == "eval-offline":
            return cmd_eval_offline(args, out)
        if args.command == "eval-openended":
            return cmd_eval_openended(args, out)
        if args.command == "teach":
            return cmd_teach(args, out, stdin or sys.stdin)
        if args.command == "synth":
            return cmd_synth(args, out)
        if args.command == "sample":
            return cmd_sample(args, out)
    except ConfigError as exc:
        print(f"orthonet: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"orthonet: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"orthonet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"orthonet: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    parser.error(f"unknown command {args.command!r}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
