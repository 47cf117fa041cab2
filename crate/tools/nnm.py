"""Minimal NNM1 writer/reader shared by the fixture tools."""

import struct

import numpy as np


def write_nnm(path, layers, arch_meta):
    """layers: (name, kind, dims, array); shape is written equal to dims."""
    header = ""
    offset = 0
    blobs = b""
    for name, kind, dims, arr in layers:
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        d = ",".join(str(v) for v in dims)
        header += f"layer\t{name}\t{kind}\t{d}\t{d}\t{offset}\t{len(data)}\n"
        offset += len(data)
        blobs += data
    header += f"arch_meta\t{offset}\t{len(arch_meta)}\n"
    h = header.encode()
    with open(path, "wb") as f:
        f.write(b"NNM1" + struct.pack("<Q", len(h)) + h + blobs + arch_meta)


def read_nnm(path):
    raw = open(path, "rb").read()
    assert raw[:4] == b"NNM1"
    (hlen,) = struct.unpack_from("<Q", raw, 4)
    header = raw[12 : 12 + hlen].decode()
    base = 12 + hlen
    layers, meta = [], b""
    for line in header.splitlines():
        parts = line.split("\t")
        if parts[0] == "layer":
            _, name, kind, dims, shape, off, length = parts
            arr = np.frombuffer(raw, "<f4", int(length) // 4, base + int(off))
            layers.append((name, kind, [int(v) for v in dims.split(",")], arr.copy()))
        else:
            off, length = int(parts[1]), int(parts[2])
            meta = raw[base + off : base + off + length]
    return layers, meta
