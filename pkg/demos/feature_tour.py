"""Walk through the four texture-feature families on one synthetic window.

Run:  python3 demos/feature_tour.py
"""

import argparse

import numpy as np

from tiredefect.synthgen import SynthConfig, generate_image
from tiredefect.texfeat import FeatureConfig, LBPConfig, extract_features, feature_names, lbp_code_map


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--size", type=int, default=128, help="window side in pixels")
    args = ap.parse_args()

    im = generate_image(SynthConfig(width=512, height=384, n_blisters=1, n_wires=0, seed=args.seed))
    box = im.annotations[0].box
    cx, cy = box.x + box.w // 2, box.y + box.h // 2
    s = args.size
    x0 = int(np.clip(cx - s // 2, 0, im.width - s))
    y0 = int(np.clip(cy - s // 2, 0, im.height - s))
    defect = im.image[y0:y0 + s, x0:x0 + s]
    clean = im.image[:s, :s] if box.x > s or box.y > s else im.image[-s:, -s:]
    print(f"blister at {box}; defect window origin ({x0}, {y0})")

    cfg = FeatureConfig()
    for r in cfg.lbp_radii:
        print(f"LBP radius {r}: {LBPConfig(r).points} sample points, {LBPConfig(r).n_bins} histogram bins")
    codes = lbp_code_map(defect, 2)
    print(f"radius-2 code raster {codes.shape}, {len(np.unique(codes))} distinct labels in this window")

    for flags in ("G", "F", "W"):
        a = extract_features(defect, flags, cfg)
        b = extract_features(clean, flags, cfg)
        gap = np.abs(a.values - b.values) / (np.abs(b.values) + 1e-9)
        top = np.argsort(gap)[::-1][:3]
        print(f"{flags}: {len(a)} values; largest relative change vs a clean window:")
        for i in top:
            print(f"    {a.names[i]:<32} {b.values[i]:>12.4f} -> {a.values[i]:>12.4f}")

    print(f"default detector vector (GFW): {len(feature_names('GFW', cfg))} values")


if __name__ == "__main__":
    main()
