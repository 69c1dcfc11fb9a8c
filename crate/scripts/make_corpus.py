"""Builds the desk-scale fixture corpus under fixtures/corpus.

Sources are the sample photographs bundled with scikit-image and
scikit-learn. Each source acts as one class; every class contributes ten
augmented corpus images and one held-out query image. The output is
deterministic for a given seed.
"""

import os
import sys

import numpy as np
from PIL import Image
from skimage import data as skdata
from sklearn.datasets import load_sample_image

SIZE = 112
PER_CLASS = 10


def gray_to_rgb(img, tint):
    img = img.astype(np.float32)
    if img.max() <= 1.0:
        img = img * 255.0
    rgb = np.stack([img * t for t in tint], axis=-1)
    return np.clip(rgb, 0, 255).astype(np.uint8)


def sources():
    return [
        ("astronaut", skdata.astronaut()),
        ("chelsea", skdata.chelsea()),
        ("coffee", skdata.coffee()),
        ("hubble", skdata.hubble_deep_field()),
        ("ihc", skdata.immunohistochemistry()),
        ("retina", skdata.retina()),
        ("rocket", skdata.rocket()),
        ("motorcycle", skdata.stereo_motorcycle()[0]),
        ("flower", load_sample_image("flower.jpg")),
        ("china", load_sample_image("china.jpg")),
        ("brick", gray_to_rgb(skdata.brick(), (1.0, 0.55, 0.35))),
        ("grass", gray_to_rgb(skdata.grass(), (0.45, 0.95, 0.35))),
        ("gravel", gray_to_rgb(skdata.gravel(), (0.8, 0.7, 0.55))),
        ("coins", gray_to_rgb(skdata.coins(), (1.0, 0.85, 0.3))),
        ("camera", gray_to_rgb(skdata.camera(), (0.5, 0.7, 1.0))),
        ("moon", gray_to_rgb(skdata.moon(), (1.0, 1.0, 1.0))),
        ("page", gray_to_rgb(skdata.page(), (1.0, 0.95, 0.8))),
        ("cell", gray_to_rgb(skdata.cell(), (0.6, 0.4, 0.9))),
        ("horse", gray_to_rgb(skdata.horse().astype(np.float32), (0.3, 0.6, 0.3))),
        ("checkerboard", gray_to_rgb(skdata.checkerboard(), (0.9, 0.3, 0.3))),
    ]


def augment(img, rng):
    h, w = img.shape[:2]
    scale = rng.uniform(0.55, 0.95)
    ch, cw = max(8, int(h * scale)), max(8, int(w * scale))
    y0 = rng.integers(0, h - ch + 1)
    x0 = rng.integers(0, w - cw + 1)
    crop = img[y0:y0 + ch, x0:x0 + cw, :3].astype(np.float32)
    if rng.random() < 0.5:
        crop = crop[:, ::-1]
    gain = rng.uniform(0.85, 1.15, size=3) * rng.uniform(0.85, 1.15)
    crop = np.clip(crop * gain, 0, 255).astype(np.uint8)
    return Image.fromarray(crop).resize((SIZE, SIZE), Image.BILINEAR)


def main(out_dir, seed=20240611):
    rng = np.random.default_rng(seed)
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)
    corpus, queries, labels = [], [], []
    for name, img in sources():
        for v in range(PER_CLASS + 1):
            out = augment(np.asarray(img), rng)
            fname = f"{name}_{v:02d}.jpg"
            out.save(os.path.join(img_dir, fname), quality=90)
            rec = (f"{name}_{v:02d}", f"images/{fname}")
            (queries if v == PER_CLASS else corpus).append(rec)
            labels.append((rec[0], name))
    with open(os.path.join(out_dir, "corpus.tsv"), "w") as f:
        f.writelines(f"{i}\t{p}\n" for i, p in corpus)
    with open(os.path.join(out_dir, "queries.tsv"), "w") as f:
        f.writelines(f"{i}\t{p}\n" for i, p in queries)
    with open(os.path.join(out_dir, "labels.tsv"), "w") as f:
        f.writelines(f"{i}\t{c}\n" for i, c in labels)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/corpus")
