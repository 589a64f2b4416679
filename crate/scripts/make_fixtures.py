"""Regenerate the small data fixtures shipped under data/.

MNIST: the `mnist` npm package (MIT) bundles 10,000 digits from the original
MNIST distribution, 1,000 per class, stored as floats in [0, 1] rounded to three
decimals. Digits are re-quantized to bytes and written as gzip-compressed IDX
files: the first 800 of each class go to the train files, the last 200 to the
test files.

UCI Iris and Breast Cancer Wisconsin (Diagnostic) are taken from the copies
bundled with scikit-learn and written back in their original UCI layouts. The
sklearn copy of WDBC has no patient ids, so the id column holds the 1-based row
number.

Usage: python3 scripts/make_fixtures.py <path-to-unpacked-mnist-npm-package>
"""
import gzip
import json
import os
import struct
import sys

import sklearn

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def mnist(pkg):
    train, test = [], []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        count = len(flat) // 784
        images = [flat[i * 784:(i + 1) * 784] for i in range(count)]
        cut = count * 4 // 5
        train += [(img, digit) for img in images[:cut]]
        test += [(img, digit) for img in images[cut:]]
    for name, rows in (("train", train), ("t10k", test)):
        pixels = [min(255, max(0, round(v * 255))) for img, _ in rows for v in img]
        write_idx(os.path.join(ROOT, "mnist", f"{name}-images-idx3-ubyte.gz"), 2051,
                  [len(rows), 28, 28], pixels)
        write_idx(os.path.join(ROOT, "mnist", f"{name}-labels-idx1-ubyte.gz"), 2049,
                  [len(rows)], [d for _, d in rows])


def uci():
    base = os.path.join(os.path.dirname(sklearn.__file__), "datasets", "data")
    species = ["Iris-setosa", "Iris-versicolor", "Iris-virginica"]
    with open(os.path.join(base, "iris.csv")) as f, \
            open(os.path.join(ROOT, "uci", "iris.data"), "w") as out:
        next(f)
        for line in f:
            *feats, label = line.strip().split(",")
            out.write(",".join(feats + [species[int(label)]]) + "\n")
    with open(os.path.join(base, "breast_cancer.csv")) as f, \
            open(os.path.join(ROOT, "uci", "wdbc.data"), "w") as out:
        next(f)
        for i, line in enumerate(f, start=1):
            *feats, label = line.strip().split(",")
            diagnosis = "M" if int(label) == 0 else "B"
            out.write(",".join([str(i), diagnosis] + feats) + "\n")


if __name__ == "__main__":
    os.makedirs(os.path.join(ROOT, "mnist"), exist_ok=True)
    os.makedirs(os.path.join(ROOT, "uci"), exist_ok=True)
    mnist(sys.argv[1])
    uci()
