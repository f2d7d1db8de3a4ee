#!/usr/bin/env python3
"""Convert the digit arrays shipped in the `mnist` npm package to IDX files.

The package stores 1,000 MNIST digits per class as flat float arrays rounded
to three decimals. Pixels are mapped back to bytes with round(v * 255) and the
classes are interleaved round-robin so that any prefix is roughly balanced.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist
"""

import hashlib
import json
import struct
import sys
from pathlib import Path

SIDE = 28


def main() -> None:
    if len(sys.argv) != 3:
        sys.exit("usage: mnist_from_npm.py <digits-dir> <out-dir>")
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    per_class = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        n = len(flat) // (SIDE * SIDE)
        per_class.append([flat[i * SIDE * SIDE:(i + 1) * SIDE * SIDE] for i in range(n)])

    images, labels = bytearray(), bytearray()
    count = 0
    for i in range(max(len(c) for c in per_class)):
        for digit, rows in enumerate(per_class):
            if i < len(rows):
                images.extend(min(255, max(0, round(v * 255))) for v in rows[i])
                labels.append(digit)
                count += 1

    out.mkdir(parents=True, exist_ok=True)
    files = {
        "train-images-idx3-ubyte": struct.pack(">IIII", 0x803, count, SIDE, SIDE) + bytes(images),
        "train-labels-idx1-ubyte": struct.pack(">II", 0x801, count) + bytes(labels),
    }
    sums = []
    for name, data in files.items():
        (out / name).write_bytes(data)
        sums.append(f"{hashlib.sha256(data).hexdigest()}  {name}\n")
    (out / "SHA256SUMS").write_text("".join(sums))
    print(f"wrote {count} images to {out}")
    print("".join(sums), end="")


if __name__ == "__main__":
    main()
