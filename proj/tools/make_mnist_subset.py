#!/usr/bin/env python3
"""Build a small MNIST subset in IDX format.

Source: the `mnist` npm package, which ships 10,000 MNIST digits as JSON
(pixel intensities in [0, 1], three decimals, grouped by digit). Fetch it with

    npm pack mnist && tar xzf mnist-*.tgz

and point --digits at package/src/digits. Images are shuffled with a fixed
seed, split into disjoint train and test sets, and written as uncompressed
big-endian IDX files.
"""

import argparse
import json
import random
import struct
from pathlib import Path

PIXELS = 28 * 28


def load_digits(digits_dir):
    images = []
    for digit in range(10):
        flat = json.loads((Path(digits_dir) / f"{digit}.json").read_text())["data"]
        if len(flat) % PIXELS:
            raise ValueError(f"{digit}.json: {len(flat)} values is not a multiple of {PIXELS}")
        for k in range(0, len(flat), PIXELS):
            pixels = bytes(min(255, max(0, round(v * 255))) for v in flat[k : k + PIXELS])
            images.append((pixels, digit))
    return images


def write_idx(prefix, items):
    with open(f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(items), 28, 28))
        for pixels, _ in items:
            f.write(pixels)
    with open(f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(items)))
        f.write(bytes(label for _, label in items))


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--digits", required=True, help="directory holding 0.json .. 9.json")
    parser.add_argument("--out", default="data", help="output directory")
    parser.add_argument("--train", type=int, default=5000)
    parser.add_argument("--test", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=20190101)
    args = parser.parse_args()

    images = load_digits(args.digits)
    if args.train + args.test > len(images):
        parser.error(f"only {len(images)} images available")
    random.Random(args.seed).shuffle(images)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "mnist-subset-train", images[: args.train])
    write_idx(out / "mnist-subset-test", images[args.train : args.train + args.test])
    print(f"wrote {args.train} train and {args.test} test images to {out}")


if __name__ == "__main__":
    main()
