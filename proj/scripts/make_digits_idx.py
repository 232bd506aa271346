#!/usr/bin/env python3
"""Build a 28x28 handwritten-digit IDX fixture from sklearn's bundled digits.

The real MNIST files are not redistributable from this environment, so this
script synthesizes a stand-in with the same container format and image
geometry: the 8x8 UCI digits are upscaled to a 20x20 box centered on a 28x28
canvas (matching MNIST's framing convention) and augmented with small integer
shifts until the requested count is reached. Output: train-images-idx3-ubyte
and train-labels-idx1-ubyte under --out.

Usage: python3 scripts/make_digits_idx.py [--out data/digits] [--n 4000] [--seed 7]
"""

import argparse
import os
import struct

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits


def upscale(img8: np.ndarray) -> np.ndarray:
    # 8x8 intensities 0..16 -> 20x20 box, bilinear, centered on 28x28.
    box = ndimage.zoom(img8.astype(np.float64) / 16.0, 20 / 8, order=1)
    box = np.clip(box, 0.0, 1.0)
    canvas = np.zeros((28, 28))
    canvas[4:24, 4:24] = box
    return canvas


def shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(img)
    ys = slice(max(dy, 0), 28 + min(dy, 0))
    xs = slice(max(dx, 0), 28 + min(dx, 0))
    ys_src = slice(max(-dy, 0), 28 + min(-dy, 0))
    xs_src = slice(max(-dx, 0), 28 + min(-dx, 0))
    out[ys, xs] = img[ys_src, xs_src]
    return out


def write_idx_images(path: str, images: np.ndarray) -> None:
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/digits")
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    base = load_digits()
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(base.images))

    images = np.zeros((args.n, 28, 28), dtype=np.uint8)
    labels = np.zeros(args.n, dtype=np.uint8)
    for i in range(args.n):
        j = order[i % len(order)]
        img = upscale(base.images[j])
        if i >= len(order):  # augmented passes get jittered
            dy, dx = rng.integers(-2, 3, size=2)
            img = shift(img, int(dy), int(dx))
        images[i] = np.round(img * 255.0)
        labels[i] = base.target[j]

    os.makedirs(args.out, exist_ok=True)
    write_idx_images(os.path.join(args.out, "train-images-idx3-ubyte"), images)
    write_idx_labels(os.path.join(args.out, "train-labels-idx1-ubyte"), labels)
    counts = np.bincount(labels, minlength=10)
    print(f"wrote {args.n} images to {args.out} (per-class: {counts.tolist()})")


if __name__ == "__main__":
    main()
