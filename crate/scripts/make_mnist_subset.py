"""Build the 2000/500 MNIST subset shipped under data/mnist-subset/.

Source: the 5000-digit MNIST sample bundled with the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz, 500 digits per class, 784 pixels + label).

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 scripts/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist-subset
"""
import gzip
import io
import struct
import sys
import zipfile

import numpy as np

TRAIN_PER_CLASS = 200
TEST_PER_CLASS = 50


def write_idx(prefix, images, labels):
    n = images.shape[0]
    with open(prefix + "-images.idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images.astype(np.uint8).tobytes())
    with open(prefix + "-labels.idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.astype(np.uint8).tobytes())


def main(wheel, out_dir):
    with zipfile.ZipFile(wheel) as z:
        raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",").astype(np.int64)
    pixels, labels = table[:, :-1], table[:, -1]
    train_idx, test_idx = [], []
    for k in range(10):
        rows = np.flatnonzero(labels == k)
        train_idx.extend(rows[:TRAIN_PER_CLASS])
        test_idx.extend(rows[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS])
    rng = np.random.RandomState(0)
    train_idx = rng.permutation(train_idx)
    test_idx = rng.permutation(test_idx)
    write_idx(out_dir + "/train", pixels[train_idx], labels[train_idx])
    write_idx(out_dir + "/test", pixels[test_idx], labels[test_idx])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
