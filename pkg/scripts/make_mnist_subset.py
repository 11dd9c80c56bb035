"""Write the bundled 5000-image MNIST subset as gzipped IDX files.

Source: ``mnist_5k.csv.gz`` shipped inside the mlxtend wheel (500 images per
class, 784 pixel columns followed by the label). Usage::

    python scripts/make_mnist_subset.py path/to/mnist_5k.csv[.gz] [--out data]
"""

import argparse
import gzip
from pathlib import Path

import numpy as np

from issgd.datasets import write_idx_images, write_idx_labels


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv")
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data"))
    args = parser.parse_args()
    opener = gzip.open if args.csv.endswith(".gz") else open
    with opener(args.csv, "rt") as f:
        table = np.loadtxt(f, delimiter=",")
    images = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx_images(images, out / "mnist5k-images-idx3-ubyte.gz")
    write_idx_labels(labels, out / "mnist5k-labels-idx1-ubyte.gz")
    print(f"{len(labels)} images, class counts {np.bincount(labels).tolist()}")


if __name__ == "__main__":
    main()
