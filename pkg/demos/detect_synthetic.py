"""Train a small detector on synthetic scans and score it on held-out scans.

This is the end-to-end path at reduced scale (smaller images, a lighter
window) so it finishes in a few minutes on one core.

Run:  python3 demos/detect_synthetic.py --out /tmp/demo_detect
"""

import argparse
import time
from pathlib import Path

from tiredefect.ensemble import run_detection, write_heatmaps
from tiredefect.forest import TrainConfig, train_forest
from tiredefect.metrics import MatchReport, match_detections
from tiredefect.synthgen import SynthConfig, generate_corpus, load_corpus
from tiredefect.windowing import DatasetConfig, WindowSpec, build_dataset, detector_meta


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo_detect")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--train", type=int, default=16)
    ap.add_argument("--test", type=int, default=6)
    args = ap.parse_args()
    out = Path(args.out)

    # a share of defect-free scans keeps the model honest on clean texture
    scene = SynthConfig(width=640, height=384, n_blisters=0, max_blisters=2, n_wires=0, max_wires=2,
                        defect_contrast=80)
    t = time.perf_counter()
    generate_corpus(args.train, scene, args.seed, out / "train")
    generate_corpus(args.test, scene, args.seed + 1, out / "test")
    print(f"corpora written in {time.perf_counter() - t:.1f}s")

    dcfg = DatasetConfig(window=WindowSpec(64, 16), background_keep_fraction=0.3, seed=args.seed)
    ds = build_dataset(load_corpus(out / "train"), dcfg)
    print(f"{len(ds)} windows {ds.class_counts()}")
    model = train_forest(ds, TrainConfig(n_trees=20, seed=args.seed), meta=detector_meta(dcfg))
    print(f"forest trained, out-of-bag accuracy {model.meta['oob_accuracy']:.3f}")

    report = MatchReport()
    for im in load_corpus(out / "test"):
        res = run_detection(im, model)
        report += match_detections(res.detections, im.annotations)
        write_heatmaps(res.heatmaps, out / "heatmaps", im.source_id)
        found = ", ".join(f"{d.label}@({d.box.x},{d.box.y},{d.box.w}x{d.box.h})" for d in res.detections.detections)
        truth = ", ".join(f"{a.label}@({a.box.x},{a.box.y},{a.box.w}x{a.box.h})" for a in im.annotations)
        print(f"{im.source_id}: truth [{truth}]\n      found [{found}]")
    print(report.format())


if __name__ == "__main__":
    main()
