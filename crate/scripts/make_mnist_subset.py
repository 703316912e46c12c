#!/usr/bin/env python3
"""Write the 5000-image MNIST subset bundled with mlxtend as gzipped IDX files.

Usage: python3 scripts/make_mnist_subset.py [OUT_DIR]

Fetches the mlxtend wheel with pip (no install) and converts
mlxtend/data/data/mnist_5k.csv.gz (784 pixel columns, label last) into
train-images-idx3-ubyte.gz / train-labels-idx1-ubyte.gz, keeping row order.
"""
import glob
import gzip
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data", "mnist-5k")
os.makedirs(out_dir, exist_ok=True)

with tempfile.TemporaryDirectory() as tmp:
    subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, "mlxtend==0.24.0"])
    wheel = glob.glob(os.path.join(tmp, "mlxtend-*.whl"))[0]
    raw = gzip.decompress(zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz"))

rows = [line.split(",") for line in raw.decode().splitlines() if line]
n = len(rows)
pixels = bytearray()
labels = bytearray()
for r in rows:
    assert len(r) == 785
    pixels.extend(int(float(v)) for v in r[:784])
    labels.append(int(float(r[784])))

# mtime=0 keeps the gzip output byte-stable
with gzip.GzipFile(os.path.join(out_dir, "train-images-idx3-ubyte.gz"), "wb", mtime=0) as f:
    f.write(struct.pack(">IIII", 0x803, n, 28, 28))
    f.write(bytes(pixels))
with gzip.GzipFile(os.path.join(out_dir, "train-labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
    f.write(struct.pack(">II", 0x801, n))
    f.write(bytes(labels))
print(f"wrote {n} images to {out_dir}")
