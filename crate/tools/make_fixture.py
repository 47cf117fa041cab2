#!/usr/bin/env python3
"""Builds the bundled classifier fixture.

Trains a small conv + dense network with torch on synthetic 16x16 images,
then writes

    toy.nnm        the trained parameters and layer graph
    toy.nnd        the evaluation set
    golden.txt     scores for the first samples and Top-1/Top-5 accuracy,
                   computed by the numpy forward pass below

into the output directory (default: crates/core/tests/fixtures).
"""

import argparse
import pathlib
import struct
import sys

import numpy as np
import torch
from torch import nn

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))
from nnm import write_nnm  # noqa: E402

SIDE = 16
CLASSES = 10
TRAIN = 2000
EVAL = 1000
GOLDEN_SAMPLES = 8

GRAPH = """\
# toy classifier
input 1 16 16
conv conv1.w conv1.b
scale bn1.g bn1.b
relu
maxpool2
conv1x1 mix.w mix.b
relu
flatten
dense fc1.w fc1.b
relu
dense fc2.w fc2.b
softmax
"""


def make_data(rng, protos, count):
    labels = rng.integers(0, CLASSES, size=count)
    xs = np.empty((count, 1, SIDE, SIDE), dtype=np.float32)
    for i, lab in enumerate(labels):
        dy, dx = rng.integers(-2, 3, size=2)
        img = np.roll(protos[lab], (dy, dx), axis=(0, 1))
        xs[i, 0] = img + rng.normal(0.0, 0.6, size=img.shape)
    return xs, labels.astype(np.uint16)


def prototypes(rng):
    yy, xx = np.mgrid[0:SIDE, 0:SIDE].astype(np.float32)
    out = []
    for _ in range(CLASSES):
        img = np.zeros((SIDE, SIDE), dtype=np.float32)
        for _ in range(3):
            cy, cx = rng.uniform(2, SIDE - 2, size=2)
            s = rng.uniform(1.0, 3.0)
            img += rng.choice([-1.0, 1.0]) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
        out.append(img)
    return out


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 16, 3, padding=1)
        self.g = nn.Parameter(torch.ones(16))
        self.b = nn.Parameter(torch.zeros(16))
        self.mix = nn.Conv2d(16, 8, 1)
        self.fc1 = nn.Linear(8 * 8 * 8, 64)
        self.fc2 = nn.Linear(64, CLASSES)

    def forward(self, x):
        x = self.conv1(x)
        x = x * self.g[None, :, None, None] + self.b[None, :, None, None]
        x = torch.max_pool2d(torch.relu(x), 2)
        x = torch.relu(self.mix(x))
        x = torch.relu(self.fc1(x.flatten(1)))
        return self.fc2(x)


def train(xs, ys):
    torch.manual_seed(0)
    net = Net()
    opt = torch.optim.Adam(net.parameters(), lr=2e-3)
    x = torch.from_numpy(xs)
    y = torch.from_numpy(ys.astype(np.int64))
    for epoch in range(30):
        perm = torch.randperm(len(x))
        for i in range(0, len(x), 64):
            idx = perm[i : i + 64]
            opt.zero_grad()
            loss = nn.functional.cross_entropy(net(x[idx]), y[idx])
            loss.backward()
            opt.step()
    return net


def layers_of(net):
    """(name, kind, dims, array in on-disk layout)."""
    f = lambda t: t.detach().numpy().astype(np.float32)
    conv = f(net.conv1.weight).transpose(2, 3, 1, 0)  # OIHW -> HWIO
    mix = f(net.mix.weight)[:, :, 0, 0].T  # [c_in, c_out]
    return [
        ("conv1.w", "conv", conv.shape, conv),
        ("conv1.b", "bias", (16,), f(net.conv1.bias)),
        ("bn1.g", "norm", (16,), f(net.g)),
        ("bn1.b", "bias", (16,), f(net.b)),
        ("mix.w", "conv1x1", mix.shape, mix),
        ("mix.b", "bias", (8,), f(net.mix.bias)),
        ("fc1.w", "dense", (64, 512), f(net.fc1.weight)),
        ("fc1.b", "bias", (64,), f(net.fc1.bias)),
        ("fc2.w", "dense", (CLASSES, 64), f(net.fc2.weight)),
        ("fc2.b", "bias", (CLASSES,), f(net.fc2.bias)),
    ]


def write_nnd(path, xs, ys):
    out = b"NND1" + struct.pack("<IB", len(xs), 3) + struct.pack("<3I", 1, SIDE, SIDE)
    out += struct.pack("<I", CLASSES)
    out += xs.astype("<f4").tobytes() + ys.astype("<u2").tobytes()
    path.write_bytes(out)


def reference_forward(p, x):
    """numpy forward pass over one CHW image, float32 throughout."""
    k = p["conv1.w"]  # [h, w, c_in, c_out]
    c, h, w = x.shape
    padded = np.zeros((c, h + 2, w + 2), dtype=np.float32)
    padded[:, 1:-1, 1:-1] = x
    y = np.zeros((k.shape[3], h, w), dtype=np.float32)
    for dy in range(3):
        for dx in range(3):
            window = padded[:, dy : dy + h, dx : dx + w]
            y += np.einsum("chw,co->ohw", window, k[dy, dx])
    y += p["conv1.b"][:, None, None]
    y = y * p["bn1.g"][:, None, None] + p["bn1.b"][:, None, None]
    y = np.maximum(y, 0)
    y = y.reshape(y.shape[0], h // 2, 2, w // 2, 2).max(axis=(2, 4))
    y = np.einsum("chw,co->ohw", y, p["mix.w"]) + p["mix.b"][:, None, None]
    y = np.maximum(y, 0).reshape(-1)
    y = np.maximum(p["fc1.w"] @ y + p["fc1.b"], 0)
    z = p["fc2.w"] @ y + p["fc2.b"]
    e = np.exp(z - z.max())
    return e / e.sum()


def rank(scores, label):
    s = scores[label]
    return sum(1 for j, v in enumerate(scores) if v > s or (v == s and j < label))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(2018)
    protos = prototypes(rng)
    xtr, ytr = make_data(rng, protos, TRAIN)
    xev, yev = make_data(rng, protos, EVAL)
    net = train(xtr, ytr)

    layers = layers_of(net)
    write_nnm(out / "toy.nnm", [(n, k, list(d), a) for n, k, d, a in layers], GRAPH.encode())
    write_nnd(out / "toy.nnd", xev, yev)

    params = {name: arr for name, _, _, arr in layers}
    scores = [reference_forward(params, x) for x in xev]
    top1 = np.mean([rank(s, l) < 1 for s, l in zip(scores, yev)])
    top5 = np.mean([rank(s, l) < 5 for s, l in zip(scores, yev)])
    lines = [f"top1 {top1:.6f}", f"top5 {top5:.6f}"]
    for i in range(GOLDEN_SAMPLES):
        lines.append(f"scores {i} " + " ".join(f"{v:.8e}" for v in scores[i]))
    (out / "golden.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines[:2]))


if __name__ == "__main__":
    main()
