#!/usr/bin/env python3
"""Writes the hand-built NNM fixtures used by the container tests.

    three.nnm   conv 3x3 (2 -> 2), dense 4x3, bias 3; exact binary fractions
    two.nnm     smooth conv 5x5 (1 -> 2) and a bias of 8, for the golden NNC
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))
from nnm import write_nnm  # noqa: E402


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else
                       pathlib.Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures")
    out.mkdir(parents=True, exist_ok=True)

    conv = (np.arange(36, dtype=np.float32) - 18.0) / 8.0
    dense = np.array([[0.5, -0.25, 1.0], [2.0, 0.0, -1.5], [0.125, 0.75, -0.5], [1.25, -2.0, 0.25]], np.float32)
    bias = np.array([0.5, -0.5, 0.0], np.float32)
    write_nnm(out / "three.nnm", [
        ("conv", "conv", [3, 3, 2, 2], conv),
        ("fc", "dense", [4, 3], dense),
        ("fc.b", "bias", [3], bias),
    ], b"input 2 4 4\n# three layers\n")

    yy, xx = np.mgrid[0:5, 0:5].astype(np.float32)
    k0 = np.exp(-((yy - 2) ** 2 + (xx - 2) ** 2) / 4.0)
    k1 = np.cos(xx / 2.0) * np.sin(yy / 3.0 + 0.5)
    kernel = np.stack([k0, k1], axis=-1)[:, :, None, :]  # [5, 5, 1, 2]
    b = np.array([0.1, -0.3, 0.3, 0.05, -0.1, 0.2, -0.25, 0.0], np.float32)
    write_nnm(out / "two.nnm", [
        ("k", "conv", [5, 5, 1, 2], kernel.astype(np.float32)),
        ("b", "bias", [8], b),
    ], b"input 1 8 8\nconv k\n")


if __name__ == "__main__":
    main()
