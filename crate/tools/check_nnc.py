#!/usr/bin/env python3
"""Standalone NNC1 reader and decoder.

    check_nnc.py IN.nnc OUT.nnm        decode IN.nnc into an NNM file
    check_nnc.py IN.nnc --payloads DIR  write each decompressed payload to DIR/<i>.bin

Uses scipy for the inverse DCT and Python's bz2 module for the payloads, so
it shares no code with the Rust decoder.
"""

import bz2
import pathlib
import struct
import sys

import numpy as np
from scipy.fft import idctn

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))
from nnm import write_nnm  # noqa: E402

KINDS = {0: ("conv", 4), 1: ("conv1x1", 2), 2: ("dense", 2), 3: ("bias", 1), 4: ("norm", 1)}


class Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, fmt):
        vals = struct.unpack_from("<" + fmt, self.data, self.pos)
        self.pos += struct.calcsize("<" + fmt)
        return vals if len(vals) > 1 else vals[0]

    def bytes(self, n):
        b = self.data[self.pos : self.pos + n]
        assert len(b) == n, "truncated"
        self.pos += n
        return b


def parse(data):
    r = Reader(data)
    assert r.bytes(4) == b"NNC1"
    version, bits, count = r.take("B"), r.take("B"), r.take("I")
    assert version == 1
    layers = []
    for _ in range(count):
        name = r.bytes(r.take("H")).decode()
        kind, nd = KINDS[r.take("B")]
        dims = list(r.take(f"{nd}I")) if nd > 1 else [r.take("I")]
        ndim = r.take("B")
        shape = [r.take("I") for _ in range(ndim)]
        method = r.take("B")
        layer = dict(name=name, kind=kind, dims=dims, shape=shape, method=method, prescale=r.take("f"))
        if method in (0, 1):
            layer["offset"], layer["step"] = r.take("f"), r.take("f")
        if method == 2:
            layer["centroids"] = np.array(r.take(f"{1 << bits}f"), np.float32)
        if method == 0 and kind in ("dense", "conv1x1"):
            layer["pad_len"], layer["original_len"] = r.take("B"), r.take("I")
        layer["payload"] = r.bytes(r.take("I"))
        layers.append(layer)
    meta = r.bytes(r.take("I"))
    assert r.pos == len(data), "trailing bytes"
    return bits, layers, meta


def decode(bits, layer):
    raw = bz2.decompress(layer["payload"]) if layer["payload"] else b""
    n = int(np.prod(layer["dims"]))
    if layer["method"] == 3:
        return np.frombuffer(raw, "<f4").astype(np.float32)
    idx = np.frombuffer(raw, "u1" if bits <= 8 else "<u2").astype(np.int64)
    if layer["method"] == 2:
        vals = layer["centroids"][idx]
    else:
        vals = np.float32(layer["offset"]) + np.float32(layer["step"]) * idx.astype(np.float32)
    if layer["method"] == 0:
        if layer["kind"] == "conv":
            h, w, ci, co = layer["dims"]
            blocks = vals.reshape(co, ci, h, w).astype(np.float64)
            spatial = idctn(blocks, axes=(2, 3), norm="ortho")
            vals = spatial.transpose(2, 3, 1, 0).reshape(-1)
        else:
            blocks = vals.reshape(-1, 8, 8).astype(np.float64)
            vals = idctn(blocks, axes=(1, 2), norm="ortho").reshape(-1)[: layer["original_len"]]
    vals = np.asarray(vals, np.float64)
    assert vals.size == n
    return (vals * layer["prescale"]).astype(np.float32)


def main():
    src = sys.argv[1]
    bits, layers, meta = parse(open(src, "rb").read())
    if sys.argv[2] == "--payloads":
        out = pathlib.Path(sys.argv[3])
        out.mkdir(parents=True, exist_ok=True)
        for i, layer in enumerate(layers):
            (out / f"{i}.bin").write_bytes(bz2.decompress(layer["payload"]) if layer["payload"] else b"")
        return
    decoded = [(l["name"], l["kind"], l["dims"], decode(bits, l)) for l in layers]
    write_nnm(sys.argv[2], decoded, meta)


if __name__ == "__main__":
    main()
