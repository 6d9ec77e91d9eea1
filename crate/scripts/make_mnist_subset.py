#!/usr/bin/env python3
"""Build the bundled digit subset in IDX format.

Source: dist/mnist.js of the `mnist` npm package (v1.1.0, MIT), which embeds
10,000 MNIST digits as floats in [0, 1], grouped by class. Pixels are mapped
back to bytes, each class is shuffled and split 80/20, and the result is
written as gzip-compressed IDX files.

usage: make_mnist_subset.py path/to/mnist.js out_dir
"""
import gzip
import json
import random
import struct
import sys


def load_classes(bundle):
    lines = bundle.split("\n")
    classes = []
    for line in lines:
        if line.startswith("module.exports={"):
            body = line[line.index("{"):].rstrip().rstrip(";")
            data = json.loads(body)["data"]
            images = [bytes(round(v * 255) for v in data[i:i + 784]) for i in range(0, len(data), 784)]
            classes.append(images)
    if len(classes) != 10:
        sys.exit(f"expected 10 digit modules, found {len(classes)}")
    return classes


def write_idx(path, magic, dims, payload):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(payload)


def main():
    src, out = sys.argv[1], sys.argv[2]
    classes = load_classes(open(src).read())
    rng = random.Random(20240101)
    train, test = [], []
    for label, images in enumerate(classes):
        idx = list(range(len(images)))
        rng.shuffle(idx)
        cut = round(0.8 * len(idx))
        train += [(images[i], label) for i in idx[:cut]]
        test += [(images[i], label) for i in idx[cut:]]
    rng.shuffle(train)
    rng.shuffle(test)
    for name, rows in (("train", train), ("t10k", test)):
        write_idx(f"{out}/{name}-images-idx3-ubyte.gz", 2051, [len(rows), 28, 28], b"".join(r[0] for r in rows))
        write_idx(f"{out}/{name}-labels-idx1-ubyte.gz", 2049, [len(rows)], bytes(r[1] for r in rows))
        print(name, len(rows))


if __name__ == "__main__":
    main()
