"""Command-line entry point: ``tiredefect <subcommand> ...``.

Every subcommand accepts ``--config run.json`` plus repeated
``--set section.key=value`` overrides, a global ``--seed`` and ``--jobs``,
and writes a ``run.json`` describing the resolved configuration and the
hashes of everything it read and wrote.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .augment import AugmentConfig, augment_directory
from .ensemble import DetectionSet, EnsembleConfig, FlagMismatchError, run_detection, write_heatmaps
from .forest import (
    ModelLoadError,
    StratificationError,
    TrainConfig,
    TrainingError,
    default_grid,
    grid_search_cv,
    load_model,
    save_model,
    train_forest,
)
from .harness import ablation_harness, format_ablation, format_sweep, grid_harness, rows_json
from .imagecore import AnnotatedImage, ImageFormatError, load_image, parse_annotations
from .metrics import MatchReport, match_detections
from .synthgen import SynthConfig, generate_corpus, load_corpus, load_image_dirs
from .windowing import DatasetConfig, WindowDataset, WindowSpec, build_dataset, detector_meta

log = logging.getLogger("tiredefect")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

DEFAULTS = {
    "seed": 0,
    "synth": {**SynthConfig(n_blisters=1, max_blisters=2, n_wires=1, max_wires=2).to_dict(), "n_images": 20},
    "dataset": DatasetConfig().to_dict(),
    "train": TrainConfig().to_dict(),
    "grid": {"k": 5, "configs": None},
    "ensemble": EnsembleConfig().to_dict(),
    "augment": AugmentConfig().to_dict(),
    "evaluate": {"coverage": 0.4, "mode": "defect"},
    "harness": {"windows": [128, 256, 384], "steps": [32, 64], "thresholds": [0.1, 0.3], "test_fraction": 0.2},
}


class UsageError(Exception):
    """Invalid or missing input: exit code 2."""


# --------------------------------------------------------------------------- #
# configuration
# --------------------------------------------------------------------------- #

def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise UsageError(f"unknown config key {where}{k}")
        if isinstance(out[k], dict) and isinstance(v, dict) and k not in ("features",):
            out[k] = _merge(out[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise UsageError(f"--set expects section.key=value, got {assignment!r}")
    path, value = assignment.split("=", 1)
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise UsageError(f"unknown config key {path}")
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise UsageError(f"unknown config key {path}")
    node[keys[-1]] = _parse_value(value)


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        doc = doc.get("config", doc)  # a previous run.json works as a config file
        cfg = _merge(cfg, {k: v for k, v in doc.items() if k in DEFAULTS})
    for s in args.set or []:
        apply_override(cfg, s)
    if args.seed is not None:
        cfg["seed"] = args.seed
    seed = int(cfg["seed"])
    cfg["synth"]["seed"] = seed
    cfg["dataset"]["seed"] = seed
    cfg["train"]["seed"] = seed
    return cfg


def _section(factory, d: dict, name: str):
    try:
        return factory(d)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid [{name}] config: {exc}") from exc


def synth_config(cfg) -> tuple[SynthConfig, int]:
    d = dict(cfg["synth"])
    n = int(d.pop("n_images"))
    return _section(SynthConfig.from_dict, d, "synth"), n


def dataset_config(cfg) -> DatasetConfig:
    return _section(DatasetConfig.from_dict, cfg["dataset"], "dataset")


def train_config(cfg) -> TrainConfig:
    return _section(TrainConfig.from_dict, cfg["train"], "train")


def ensemble_config(cfg) -> EnsembleConfig:
    return _section(EnsembleConfig.from_dict, cfg["ensemble"], "ensemble")


def augment_config(cfg) -> AugmentConfig:
    return _section(AugmentConfig.from_dict, cfg["augment"], "augment")


# --------------------------------------------------------------------------- #
# run records
# --------------------------------------------------------------------------- #

def file_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def hash_tree(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(q for q in p.rglob("*") if q.is_file() and q.name != "run.json"):
                out[str(f)] = file_hash(f)
        elif p.is_file():
            out[str(p)] = file_hash(p)
    return out


def write_run(run_dir: Path, command: str, cfg: dict, inputs, outputs) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "tool": "tiredefect",
        "version": __version__,
        "command": command,
        "seed": cfg["seed"],
        "config": cfg,
        "inputs": hash_tree(inputs),
        "outputs": hash_tree(outputs),
    }
    (run_dir / "run.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _require_dir(p, what: str) -> Path:
    p = Path(p)
    if not p.is_dir():
        raise UsageError(f"{what} {p} is not a directory")
    return p


def _require_file(p, what: str) -> Path:
    p = Path(p)
    if not p.is_file():
        raise UsageError(f"{what} {p} does not exist")
    return p


def _load_images(args) -> tuple[list[AnnotatedImage], list[Path]]:
    try:
        if getattr(args, "corpus", None):
            d = _require_dir(args.corpus, "corpus")
            return load_corpus(d), [d]
        if not (args.images and args.annotations):
            raise UsageError("give --corpus DIR or both --images DIR and --annotations DIR")
        i, a = _require_dir(args.images, "image directory"), _require_dir(args.annotations, "annotation directory")
        return load_image_dirs(i, a), [i, a]
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot load corpus: {exc}") from exc


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# --------------------------------------------------------------------------- #
# subcommands
# --------------------------------------------------------------------------- #

def cmd_synth(args, cfg) -> None:
    scfg, n = synth_config(cfg)
    if args.n_images is not None:
        n = args.n_images
        cfg["synth"]["n_images"] = n
    out = Path(args.out)
    manifest = generate_corpus(n, scfg, cfg["seed"], out, jobs=args.jobs)
    log.info("wrote %d images to %s (%s)", n, out, manifest["class_counts"])
    write_run(out, "synth", cfg, [], [out])


def _model_meta(dcfg: DatasetConfig, ds: WindowDataset) -> dict:
    return detector_meta(ds.config or dcfg)


def cmd_dataset(args, cfg) -> None:
    dcfg = dataset_config(cfg)
    images, inputs = _load_images(args)
    ds = build_dataset(images, dcfg, jobs=args.jobs)
    out = Path(args.out)
    ds.save(out)
    log.info("wrote %d windows %s to %s", len(ds), ds.class_counts(), out)
    write_run(out, "dataset", cfg, inputs, [out])


def _load_dataset(path) -> WindowDataset:
    d = _require_dir(path, "dataset")
    try:
        return WindowDataset.load(d)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read dataset {d}: {exc}") from exc


def cmd_train(args, cfg) -> None:
    ds = _load_dataset(args.dataset)
    tcfg = train_config(cfg)
    model = train_forest(ds, tcfg, jobs=args.jobs, meta=_model_meta(dataset_config(cfg), ds))
    out = Path(args.out)
    save_model(model, out)
    report = {"class_counts": ds.class_counts(), "n_features": model.n_features, "meta": model.meta,
              "config": tcfg.to_dict(), "fingerprint": model.fingerprint}
    report_path = out.with_suffix(".report.json")
    _write_json(report_path, report)
    log.info("trained %d trees on %d windows; oob accuracy %s", tcfg.n_trees, len(ds), model.meta.get("oob_accuracy"))
    write_run(out.parent, "train", cfg, [Path(args.dataset)], [out, report_path])


def cmd_gridsearch(args, cfg) -> None:
    ds = _load_dataset(args.dataset)
    g = cfg["grid"]
    seed = cfg["seed"]
    if g.get("configs"):
        grid = [_section(TrainConfig.from_dict, {**c, "seed": seed}, "grid") for c in g["configs"]]
    else:
        grid = default_grid(seed)
    best, report = grid_search_cv(ds, grid, k=int(g["k"]), seed=seed, jobs=args.jobs)
    model = train_forest(ds, best, jobs=args.jobs, meta=_model_meta(dataset_config(cfg), ds))
    out = Path(args.out)
    save_model(model, out)
    report_path = Path(args.report) if args.report else out.with_suffix(".cv.json")
    _write_json(report_path, report.to_dict())
    log.info("selected %s (mean macro F1 %.4f)", best, report.candidates[report.selected]["mean_macro_f1"])
    write_run(out.parent, "gridsearch", cfg, [Path(args.dataset)], [out, report_path])


def _image_inputs(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(q for q in p.iterdir() if q.suffix.lower() in (".png", ".pgm"))
        elif p.is_file():
            files.append(p)
        else:
            raise UsageError(f"input image {p} does not exist")
    if not files:
        raise UsageError("no input images found")
    return files


def cmd_detect(args, cfg) -> None:
    model = load_model(_require_file(args.model, "model"))
    ecfg = ensemble_config(cfg)
    flags = args.flags or model.meta.get("flags")
    spec = None
    if args.window or args.step:
        w = model.meta.get("window", {})
        spec = WindowSpec(args.window or w.get("size", 128), args.step or w.get("step", 32))
    out = Path(args.out)
    inputs = _image_inputs(args.images)
    written = []
    for path in inputs:
        try:
            img = AnnotatedImage(load_image(path), [], path.stem)
        except OSError as exc:
            raise UsageError(str(exc)) from exc
        res = run_detection(img, model, spec=spec, flags=flags, ecfg=ecfg)
        det_path = out / f"{path.stem}.json"
        res.detections.save(det_path)
        written += [det_path] + write_heatmaps(res.heatmaps, out, path.stem)
        log.info("%s: %d detections", path.name, len(res.detections))
    write_run(out, "detect", cfg, [Path(args.model)] + inputs, written)


def cmd_augment(args, cfg) -> None:
    acfg = augment_config(cfg)
    src = _require_dir(args.images, "image directory")
    out = Path(args.out)
    written = augment_directory(src, out, acfg)
    log.info("wrote %d composites to %s", len(written), out)
    write_run(out, "augment", cfg, [src], written)


def _pairs(detections: Path, annotations: Path) -> list[tuple[Path, Path]]:
    if detections.is_file() and annotations.is_file():
        return [(detections, annotations)]
    if detections.is_dir() and annotations.is_dir():
        pairs = []
        for a in sorted(annotations.glob("*.json")):
            d = detections / a.name
            if not d.is_file():
                raise UsageError(f"no detections file {d} for annotations {a}")
            pairs.append((d, a))
        return pairs
    raise UsageError("--detections and --annotations must both be files or both be directories")


def cmd_evaluate(args, cfg) -> None:
    ev = cfg["evaluate"]
    report = MatchReport()
    pairs = _pairs(Path(args.detections), Path(args.annotations))
    for dpath, apath in pairs:
        try:
            dets = DetectionSet.load(dpath)
            _, _, _, truths = parse_annotations(json.loads(apath.read_text()))
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise UsageError(f"cannot read {dpath} / {apath}: {exc}") from exc
        try:
            report += match_detections(dets, truths, coverage=float(ev["coverage"]), mode=ev["mode"])
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    text = report.format()
    print(text)
    o = report.overall
    print(f"precision/recall {o.precision:.3f}/{o.recall:.3f}")
    outputs = []
    if args.out:
        out = Path(args.out)
        _write_json(out, report.to_dict())
        out.with_suffix(".txt").write_text(text + "\n")
        outputs = [out, out.with_suffix(".txt")]
        write_run(out.parent, "evaluate", cfg, [Path(args.detections), Path(args.annotations)], outputs)


def _harness_outputs(out: Path, name: str, text: str, json_text: str) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.txt").write_text(text + "\n")
    (out / f"{name}.json").write_text(json_text + "\n")
    return [out / f"{name}.txt", out / f"{name}.json"]


def cmd_ablate(args, cfg) -> None:
    images, inputs = _load_images(args)
    dcfg, tcfg = dataset_config(cfg), train_config(cfg)
    rows = ablation_harness(images, dcfg, tcfg, test_fraction=float(cfg["harness"]["test_fraction"]))
    text = format_ablation(rows)
    print(text)
    out = Path(args.out)
    written = _harness_outputs(out, "ablation", text, rows_json(rows, seed=cfg["seed"]))
    write_run(out, "ablate", cfg, inputs, written)


def cmd_sweep(args, cfg) -> None:
    images, inputs = _load_images(args)
    h = cfg["harness"]
    dcfg, tcfg = dataset_config(cfg), train_config(cfg)
    try:
        rows = grid_harness(images, h["windows"], h["steps"], h["thresholds"], dcfg.flags, tcfg,
                            base_cfg=dcfg, test_fraction=float(h["test_fraction"]))
    except ValueError as exc:
        if "step" in str(exc) or "IoMA" in str(exc):
            raise UsageError(str(exc)) from exc
        raise
    text = format_sweep(rows)
    print(text)
    out = Path(args.out)
    written = _harness_outputs(out, "sweep", text, rows_json(rows, seed=cfg["seed"], flags=dcfg.flags))
    write_run(out, "sweep", cfg, inputs, written)


# --------------------------------------------------------------------------- #
# argument parsing
# --------------------------------------------------------------------------- #

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (sections synth, dataset, train, ...)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes; never changes outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tiredefect", description="Texture-feature defect detection pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic annotated corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--n-images", type=int)

    def corpus_args(sp):
        sp.add_argument("--corpus", help="corpus directory (images/, annotations/)")
        sp.add_argument("--images")
        sp.add_argument("--annotations")

    s = sub.add_parser("dataset", parents=[common], help="label windows and extract features")
    corpus_args(s)
    s.add_argument("--out", required=True)

    s = sub.add_parser("train", parents=[common], help="train a random forest on a window dataset")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True, help="model JSON path")

    s = sub.add_parser("gridsearch", parents=[common], help="k-fold grid search, then fit the best config")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True, help="model JSON path")
    s.add_argument("--report", help="CV report path (default: <out>.cv.json)")

    s = sub.add_parser("detect", parents=[common], help="detect defects and write heatmaps")
    s.add_argument("images", nargs="+", help="image files or directories")
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--flags", help="feature families; must match the model")
    s.add_argument("--window", type=int)
    s.add_argument("--step", type=int)

    s = sub.add_parser("augment", parents=[common], help="write 3-channel augmented composites")
    s.add_argument("--images", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("evaluate", parents=[common], help="match detections against annotations")
    s.add_argument("--detections", required=True, help="detections JSON file or directory")
    s.add_argument("--annotations", required=True, help="annotation JSON file or directory")
    s.add_argument("--out", help="report JSON path")

    s = sub.add_parser("ablate", parents=[common], help="feature-subset ablation table")
    corpus_args(s)
    s.add_argument("--out", required=True)

    s = sub.add_parser("sweep", parents=[common], help="window/step/threshold sweep table")
    corpus_args(s)
    s.add_argument("--out", required=True)
    return p


COMMANDS = {
    "synth": cmd_synth, "dataset": cmd_dataset, "train": cmd_train, "gridsearch": cmd_gridsearch,
    "detect": cmd_detect, "augment": cmd_augment, "evaluate": cmd_evaluate, "ablate": cmd_ablate, "sweep": cmd_sweep,
}

USAGE_ERRORS = (
    UsageError, FileNotFoundError, ImageFormatError, ModelLoadError, FlagMismatchError,
    StratificationError, TrainingError,
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
