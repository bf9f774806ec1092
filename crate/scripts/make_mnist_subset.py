#!/usr/bin/env python3
"""Build the bundled MNIST subset (IDX format) from the 5,000-digit sample
shipped inside the `mlxtend` wheel.

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 scripts/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist-subset

Writes 2,000 training and 1,000 validation images (28x28, stratified:
200/100 per digit) plus a manifest with downsample factor 2 (14x14).
"""
import gzip
import json
import random
import struct
import sys
import zipfile
from pathlib import Path


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    wheel, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = gzip.decompress(raw).decode().splitlines()
    by_class = {c: [] for c in range(10)}
    for line in rows:
        vals = [int(float(v)) for v in line.split(",")]
        by_class[vals[-1]].append(vals[:-1])
    rng = random.Random(0)
    train, val = [], []
    for c in range(10):
        items = by_class[c]
        rng.shuffle(items)
        train += [(img, c) for img in items[:200]]
        val += [(img, c) for img in items[200:300]]
    rng.shuffle(train)
    rng.shuffle(val)
    write_idx_images(out / "train-images-idx3-ubyte", [i for i, _ in train])
    write_idx_labels(out / "train-labels-idx1-ubyte", [l for _, l in train])
    write_idx_images(out / "val-images-idx3-ubyte", [i for i, _ in val])
    write_idx_labels(out / "val-labels-idx1-ubyte", [l for _, l in val])
    manifest = {
        "name": "mnist-subset",
        "class_names": [str(c) for c in range(10)],
        "downsample": 2,
        "train": {"images": "train-images-idx3-ubyte", "labels": "train-labels-idx1-ubyte"},
        "val": {"images": "val-images-idx3-ubyte", "labels": "val-labels-idx1-ubyte"},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
