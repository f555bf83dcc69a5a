#!/usr/bin/env python3
"""Convert the digits shipped in the `mnist` npm package into IDX files.

The npm package (https://www.npmjs.com/package/mnist) bundles 10,000 MNIST
digits as per-class JSON arrays of 784 grey levels in [0, 1], rounded to three
decimals. Multiplying by 255 and rounding recovers the original bytes exactly.

The digits are shuffled with a fixed seed and split into a training pool and
a held-out test set, written as gzipped IDX files under the standard MNIST
names so the loader treats them like the official distribution.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/npm_mnist_to_idx.py package/src/digits data/mnist
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

TRAIN_POOL = 6000
SEED = 20240611


def write_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(len(data) // 784):
            pixels = [round(v * 255) for v in data[i * 784:(i + 1) * 784]]
            assert all(0 <= p <= 255 for p in pixels)
            samples.append((pixels, digit))
    random.Random(SEED).shuffle(samples)
    train, test = samples[:TRAIN_POOL], samples[TRAIN_POOL:]
    write_images(dst / "train-images-idx3-ubyte.gz", [s[0] for s in train])
    write_labels(dst / "train-labels-idx1-ubyte.gz", [s[1] for s in train])
    write_images(dst / "t10k-images-idx3-ubyte.gz", [s[0] for s in test])
    write_labels(dst / "t10k-labels-idx1-ubyte.gz", [s[1] for s in test])
    print(f"train pool {len(train)}, test {len(test)}")


if __name__ == "__main__":
    main()
