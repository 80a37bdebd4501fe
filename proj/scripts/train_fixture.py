#!/usr/bin/env python3
"""Trains the shipped tiny CNN fixture and writes its artifacts.

Outputs (all under fixtures/):
  tinynet.manifest   network description
  tinynet.weights    little-endian fp32 blob, tensors in manifest order
  patterns.eval      labeled held-out set (LPFPDS1)
  patterns.calib     calibration samples (LPFPDS1)

The task is synthetic: classify an 8x8 grayscale tile as horizontal
stripes, vertical stripes, checkerboard, or center blob, under additive
noise and a per-sample exposure gain in [1/8, 1]. The gain spread gives
the tensors real dynamic range, so an 8-bit code spends its precision
the way it would on a natural network. Fully seeded; rerunning
reproduces the blobs byte for byte on the same torch build.
"""

import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

SEED = 1234
H = W = 8
NUM_CLASSES = 4
EVAL_N = 256
CALIB_N = 64
NOISE = 0.18
FIXDIR = Path(__file__).resolve().parent.parent / "fixtures"


def make_batch(rng, n):
    """Returns (n,1,8,8) float32 in [0,1] and int labels."""
    x = np.zeros((n, 1, H, W), dtype=np.float32)
    y = rng.integers(0, NUM_CLASSES, size=n)
    rows = np.arange(H)[:, None]
    cols = np.arange(W)[None, :]
    for i in range(n):
        phase = int(rng.integers(0, 2))
        hi = rng.uniform(0.75, 1.0)
        lo = rng.uniform(0.0, 0.25)
        if y[i] == 0:  # horizontal stripes
            img = np.where((rows + phase) % 2 == 0, hi, lo)
        elif y[i] == 1:  # vertical stripes
            img = np.where((cols + phase) % 2 == 0, hi, lo)
        elif y[i] == 2:  # checkerboard
            img = np.where((rows + cols + phase) % 2 == 0, hi, lo)
        else:  # center blob
            cy = rng.uniform(2.5, 4.5)
            cx = rng.uniform(2.5, 4.5)
            d2 = (rows - cy) ** 2 + (cols - cx) ** 2
            img = lo + (hi - lo) * np.exp(-d2 / 4.0)
        img = img + rng.normal(0.0, NOISE, size=(H, W))
        gain = 2.0 ** rng.uniform(-3.0, 0.0)
        x[i, 0] = gain * np.clip(img, 0.0, 1.0)
    return x.astype(np.float32), y.astype(np.int64)


class TinyNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv0 = nn.Conv2d(1, 8, 3, padding=1)
        self.conv1 = nn.Conv2d(8, 8, 3, padding=1)
        self.conv2 = nn.Conv2d(8, 8, 1)
        self.conv3 = nn.Conv2d(16, 16, 3, padding=1)
        self.fc = nn.Linear(64, NUM_CLASSES)

    def forward(self, x):
        a0 = F.relu(self.conv0(x))
        a3 = torch.cat([self.conv1(a0), self.conv2(a0)], dim=1)
        a5 = F.max_pool2d(F.relu(a3), 2)
        a7 = a5 + self.conv3(a5)
        a9 = F.avg_pool2d(F.relu(a7), 2)
        return self.fc(a9.flatten(1))


MANIFEST = """\
# Tiny 4-class pattern classifier on 1x8x8 inputs. Exercises every layer
# kind the engine supports except bn and leaky (unit tests cover those).
input c=1 h=8 w=8
conv ic=1 oc=8 k=3 pad=1 act=relu w=w0 b=b0
conv ic=8 oc=8 k=3 pad=1 w=w1 b=b1
conv ic=8 oc=8 k=1 src=0 w=w2 b=b2
concat src=1,2
relu
maxpool k=2
conv ic=16 oc=16 k=3 pad=1 w=w3 b=b3
add src=5,6
relu
avgpool k=2
fc ic=64 oc=4 w=w4 b=b4
"""


def save_dataset(path, x, y):
    n = x.shape[0]
    with open(path, "wb") as f:
        f.write(b"LPFPDS1\n")
        f.write(struct.pack("<5I", n, 1, H, W, NUM_CLASSES))
        f.write(x.astype("<f4").tobytes())
        f.write(y.astype("<u4").tobytes())


def export_weights(model, path):
    order = []
    for m in [model.conv0, model.conv1, model.conv2, model.conv3, model.fc]:
        order.append(m.weight.detach().numpy())
        order.append(m.bias.detach().numpy())
    with open(path, "wb") as f:
        for t in order:
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return order


def blob_forward(order, x):
    """Replays the exported blob with plain numpy; guards the export layout."""
    w0, b0, w1, b1, w2, b2, w3, b3, w4, b4 = order

    def conv(inp, w, b, pad):
        ic, ih, iw = inp.shape
        oc, _, kh, kw = w.shape
        padded = np.pad(inp, ((0, 0), (pad, pad), (pad, pad)))
        oh, ow = ih + 2 * pad - kh + 1, iw + 2 * pad - kw + 1
        out = np.zeros((oc, oh, ow), dtype=np.float64)
        for o in range(oc):
            for y in range(oh):
                for xx in range(ow):
                    out[o, y, xx] = (
                        np.sum(w[o] * padded[:, y : y + kh, xx : xx + kw]) + b[o]
                    )
        return out

    a0 = np.maximum(conv(x[0:1].astype(np.float64), w0, b0, 1), 0.0)
    a3 = np.concatenate([conv(a0, w1, b1, 1), conv(a0, w2, b2, 0)], axis=0)
    a4 = np.maximum(a3, 0.0)
    a5 = a4.reshape(16, 4, 2, 4, 2).max(axis=(2, 4))
    a7 = a5 + conv(a5, w3, b3, 1)
    a8 = np.maximum(a7, 0.0)
    a9 = a8.reshape(16, 2, 2, 2, 2).mean(axis=(2, 4))
    return w4 @ a9.reshape(64) + b4


def main():
    rng = np.random.default_rng(SEED)
    torch.manual_seed(SEED)

    model = TinyNet()
    opt = torch.optim.Adam(model.parameters(), lr=1e-2, weight_decay=1e-4)
    for step in range(800):
        xb, yb = make_batch(rng, 128)
        logits = model(torch.from_numpy(xb))
        loss = F.cross_entropy(logits, torch.from_numpy(yb))
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 100 == 0:
            acc = (logits.argmax(1).numpy() == yb).mean()
            print(f"step {step:4d} loss {loss.item():.4f} batch acc {acc:.3f}")

    model.eval()
    eval_x, eval_y = make_batch(rng, EVAL_N)
    calib_x, calib_y = make_batch(rng, CALIB_N)
    with torch.no_grad():
        pred = model(torch.from_numpy(eval_x)).argmax(1).numpy()
    acc = (pred == eval_y).mean()
    print(f"fp32 eval accuracy (torch): {acc:.4f} ({(pred == eval_y).sum()}/{EVAL_N})")

    FIXDIR.mkdir(exist_ok=True)
    (FIXDIR / "tinynet.manifest").write_text(MANIFEST)
    order = export_weights(model, FIXDIR / "tinynet.weights")
    save_dataset(FIXDIR / "patterns.eval", eval_x, eval_y)
    save_dataset(FIXDIR / "patterns.calib", calib_x, calib_y)

    # Layout guard: the numpy replay of the exported blob must agree with torch.
    with torch.no_grad():
        want = model(torch.from_numpy(eval_x[:8])).numpy()
    for i in range(8):
        got = blob_forward(order, eval_x[i].astype(np.float64))
        if not np.allclose(got, want[i], atol=1e-4):
            raise SystemExit(f"export layout mismatch on sample {i}: {got} vs {want[i]}")
    print("blob replay matches torch on 8 samples")

    sizes = {p.name: p.stat().st_size for p in sorted(FIXDIR.glob("tinynet.*"))}
    print("wrote", sizes)


if __name__ == "__main__":
    main()
