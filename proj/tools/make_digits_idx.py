#!/usr/bin/env python3
# Copyright 2026 The shiftq Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes the scikit-learn 8x8 digits set as IDX files (train/test split).

Pixel intensities 0..16 are rescaled to 0..255. The split is deterministic:
the first 1297 samples are training data, the remaining 500 are test data.
"""
import argparse
import pathlib
import struct

import numpy as np
from sklearn.datasets import load_digits

TRAIN_COUNT = 1297


def write_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("out", type=pathlib.Path)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    digits = load_digits()
    images = np.rint(digits.images * (255.0 / 16.0)).astype(np.uint8)
    labels = digits.target.astype(np.uint8)

    write_images(args.out / "train-images-idx3-ubyte", images[:TRAIN_COUNT])
    write_labels(args.out / "train-labels-idx1-ubyte", labels[:TRAIN_COUNT])
    write_images(args.out / "test-images-idx3-ubyte", images[TRAIN_COUNT:])
    write_labels(args.out / "test-labels-idx1-ubyte", labels[TRAIN_COUNT:])


if __name__ == "__main__":
    main()
