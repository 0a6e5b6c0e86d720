"""Writes the small photo fixtures used by the acceptance suite.

Each photo from scikit-image's bundled samples is downscaled to fit 256x256
and split into three regions by k-means on CIELAB color plus position. Output
goes to crates/service/tests/data as <name>.png and <name>.mask.json.
"""

import json
from pathlib import Path

import numpy as np
import skimage.data
from scipy import ndimage
from skimage import color, io, transform
from sklearn.cluster import KMeans

NAMES = ["astronaut", "coffee", "chelsea", "rocket"]
OUT = Path(__file__).resolve().parent.parent / "crates" / "service" / "tests" / "data"


def runs(labels, k):
    flat = labels.ravel()
    out = [[] for _ in range(k)]
    start = 0
    while start < flat.size:
        end = start + 1
        while end < flat.size and flat[end] == flat[start]:
            end += 1
        out[flat[start]].append([start, end - start])
        start = end
    return out


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name in NAMES:
        img = getattr(skimage.data, name)()[..., :3]
        scale = 256 / max(img.shape[:2])
        h, w = round(img.shape[0] * scale), round(img.shape[1] * scale)
        small = (transform.resize(img, (h, w), anti_aliasing=True) * 255).round().astype(np.uint8)
        lab = color.rgb2lab(small)
        yy, xx = np.mgrid[0:h, 0:w]
        feats = np.column_stack([lab.reshape(-1, 3), 20 * yy.ravel() / h, 20 * xx.ravel() / w])
        raw = KMeans(n_clusters=3, n_init=4, random_state=0).fit_predict(feats).reshape(h, w)
        raw = ndimage.median_filter(raw, size=5)
        present = [c for c in range(3) if (raw == c).any()]
        order = sorted(present, key=lambda c: lab[..., 0][raw == c].mean())
        labels = np.zeros_like(raw)
        for new, old in enumerate(order):
            labels[raw == old] = new
        names = ["shadow", "midtone", "highlight"][: len(order)]
        if len(order) == 2:
            names = ["shadow", "highlight"]
        seg = {
            "width": w,
            "height": h,
            "regions": [
                {"id": i, "label": names[i], "rle": r} for i, r in enumerate(runs(labels, len(order)))
            ],
        }
        io.imsave(OUT / f"{name}.png", small, check_contrast=False)
        (OUT / f"{name}.mask.json").write_text(json.dumps(seg))
        print(name, w, h, [int((labels == i).sum()) for i in range(len(order))])


if __name__ == "__main__":
    main()
