#!/usr/bin/env python3
"""Build the small MNIST subset shipped under data/mnist-subset.

Source: the `mnist` npm package (10k real MNIST digits stored as JSON,
pixel values in [0, 1]). Usage:

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_mnist_subset.py package/src/digits data/mnist-subset

Writes IDX files for a train split (first 200 images per digit) and a
test split (next 100 images per digit), interleaved by class.
"""
import json
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 200
TEST_PER_CLASS = 100


def load_digit(src: Path, digit: int):
    flat = json.loads((src / f"{digit}.json").read_text())["data"]
    n = len(flat) // 784
    return [
        bytes(min(255, max(0, round(v * 255))) for v in flat[i * 784:(i + 1) * 784])
        for i in range(n)
    ]


def write_idx(path: Path, images, labels):
    with open(path.with_name(path.name + "-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(path.with_name(path.name + "-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    digits = [load_digit(src, d) for d in range(10)]
    splits = {"train": (0, TRAIN_PER_CLASS), "t10k": (TRAIN_PER_CLASS, TRAIN_PER_CLASS + TEST_PER_CLASS)}
    for name, (lo, hi) in splits.items():
        images, labels = [], []
        for i in range(lo, hi):
            for d in range(10):
                images.append(digits[d][i])
                labels.append(d)
        write_idx(out / name, images, labels)


if __name__ == "__main__":
    main()
