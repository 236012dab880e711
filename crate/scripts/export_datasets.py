"""Export the bundled evaluation datasets as plain CSV files under data/.

Wine and Breast Cancer come from the copies shipped inside scikit-learn.
The MNIST subset is drawn from the 10k test digits distributed in the npm
`mnist` package (pass the path to its `src/digits` directory).

    python3 scripts/export_datasets.py /path/to/mnist/package/src/digits
"""
import csv
import json
import os
import random
import sys

from sklearn.datasets import load_breast_cancer, load_wine

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def export_sklearn(loader, name, label_name, label_offset):
    ds = loader()
    names = [n.replace(" ", "_").replace("/", "_") for n in ds.feature_names]
    rows = [[repr(float(v)) for v in x] + [int(y) + label_offset] for x, y in zip(ds.data, ds.target)]
    write(os.path.join(OUT, name), names + [label_name], rows)


def export_mnist(digits_dir, classes=(2, 4, 7, 9), per_class=310, seed=2018):
    rng = random.Random(seed)
    rows = []
    for c in classes:
        data = json.load(open(os.path.join(digits_dir, f"{c}.json")))["data"]
        count = len(data) // 784
        picks = sorted(rng.sample(range(count), per_class))
        for p in picks:
            px = data[p * 784:(p + 1) * 784]
            rows.append([int(round(v * 255)) for v in px] + [c])
    rng.shuffle(rows)
    write(os.path.join(OUT, "mnist_2479.csv"), [f"px{i}" for i in range(784)] + ["digit"], rows)


if __name__ == "__main__":
    export_sklearn(load_wine, "wine.csv", "cultivar", 1)
    export_sklearn(load_breast_cancer, "cancer.csv", "benign", 0)
    if len(sys.argv) > 1:
        export_mnist(sys.argv[1])
