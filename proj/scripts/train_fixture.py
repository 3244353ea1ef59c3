#!/usr/bin/env python3
"""Train the 8x8 digits fixtures and write them in the flexpe container format.

Outputs (under data/fixtures/):
  digits_mlp.fpm   dense 64-32 tanh, dense 32-10 softmax
  digits_conv.fpm  conv 1->8 3x3 relu, dense 288-10 softmax
  digits_test.fpd  held-out half of the digits set

Every AF sees pre/5.5 clamped to +-1.1182, matching the emulator. After a
float warm-up, training adds a second loss term through fake quantization of the FxP8 MAC path
(LR-mode weight grid, activation grid, injected accumulator rounding noise) so
the fixture tolerates the 8-bit accumulator. psum_max is the largest partial
sum magnitude seen on the training half, bias first then inputs in order.

Requires numpy, torch, scikit-learn. Deterministic for a fixed --seed.
"""
import argparse
import hashlib
import os

import numpy as np
import torch
from sklearn.datasets import load_digits
from sklearn.model_selection import train_test_split

MAX_NORM = 5.5
HR_LIMIT = 1.1182
WEIGHT_RAIL = 7.5
PSUM_TARGET = 7.0
NOISE_GAIN = 3.0
RELU_RAIL = 4.0  # integer range of the AF lane format


def scaled(kind, pre):
    u = pre / MAX_NORM
    if kind == "relu":
        return torch.clamp(u, 0.0, RELU_RAIL)
    u = torch.clamp(u, -HR_LIMIT, HR_LIMIT)
    return torch.tanh(u) if kind == "tanh" else torch.sigmoid(u)


def ste(x, fn):
    return x + (fn(x) - x).detach()


def lr_grid(z):
    # 5 LR stages with shifts -2..2 land on odd multiples of 0.25
    return torch.clamp(torch.floor(z / 0.5) * 0.5 + 0.25, -7.75, 7.75)


def partial_max(x, w, b):
    """max |b + sum_{j<=k} w_j x_j| over samples, outputs and k (x: S x K, w: O x K)."""
    parts = torch.cumsum(x[:, None, :] * w[None, :, :], dim=2) + b[None, :, None]
    return torch.maximum(parts.abs().max(), b.abs().max())


def fq_dense(x, w, b, noise):
    sw = w.abs().max().detach() / WEIGHT_RAIL
    alpha = PSUM_TARGET * sw / partial_max(x.detach(), w.detach(), b.detach())
    X = ste(x * alpha, lambda t: torch.round(t * 16) / 16)
    Z = ste(w / sw, lr_grid)
    y = X @ Z.T + b * alpha / sw
    if noise:
        # two rounded micro-rotations per MAC at 1/16 LSB, scaled up for margin
        std = NOISE_GAIN * np.sqrt(2 * x.shape[1] / 12) / 16
        y = y + (torch.rand_like(y) * 2 - 1) * std * np.sqrt(3)
    return y * sw / alpha


def unfold(x):
    # S x 1 x 8 x 8 -> S*36 x 9 patches in (ci, kh, kw) order
    p = torch.nn.functional.unfold(x, kernel_size=3)  # S x 9 x 36
    return p.transpose(1, 2).reshape(-1, 9)


class Mlp(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.fc1 = torch.nn.Linear(64, 32)
        self.fc2 = torch.nn.Linear(32, 10)

    def forward(self, x, quant=False):
        d = (lambda a, l: fq_dense(a, l.weight, l.bias, self.training)) if quant else (lambda a, l: l(a))
        h = scaled("tanh", d(x, self.fc1))
        return d(h, self.fc2)


class Conv(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.c1 = torch.nn.Conv2d(1, 8, 3)
        self.fc = torch.nn.Linear(288, 10)

    def forward(self, x, quant=False):
        S = x.shape[0]
        img = x.reshape(S, 1, 8, 8)
        if quant:
            w = self.c1.weight.reshape(8, 9)
            pre = fq_dense(unfold(img), w, self.c1.bias, self.training)  # S*36 x 8
            pre = pre.reshape(S, 36, 8).transpose(1, 2).reshape(S, 288)
            h = scaled("relu", pre)
            return fq_dense(h, self.fc.weight, self.fc.bias, self.training)
        h = scaled("relu", self.c1(img).reshape(S, 288))
        return self.fc(h)


def train(model, x, y, epochs, warmup, seed):
    torch.manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=0.01)
    model.train()
    for ep in range(epochs):
        # the float reference and the fake-quantized path share one objective
        loss = torch.nn.functional.cross_entropy(model(x), y)
        if ep >= warmup:
            loss = loss + torch.nn.functional.cross_entropy(model(x, quant=True), y)
        opt.zero_grad()
        loss.backward()
        opt.step()
    model.eval()


def container(kind, records, tensors):
    blob = bytearray()
    lines = [f"FLEXPE-CONTAINER 1", f"kind {kind}"] + records
    for name, dtype, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f4" if dtype == "f32" else "<i4")
        shape = "x".join(str(d) for d in arr.shape)
        lines.append(f"tensor {name} {dtype} {shape} offset={len(blob)} bytes={arr.nbytes}")
        blob += arr.tobytes()
    lines.append("digest sha256:" + hashlib.sha256(blob).hexdigest())
    lines.append(f"blob {len(blob)}")
    return ("\n".join(lines) + "\n").encode() + bytes(blob)


def fmt(v):
    return repr(float(v))


def mlp_file(m, xtr):
    with torch.no_grad():
        w1, b1, w2, b2 = (t.detach() for t in (m.fc1.weight, m.fc1.bias, m.fc2.weight, m.fc2.bias))
        # calibrate on the float32 values the container stores
        ps1 = partial_max(xtr, w1, b1)
        h = scaled("tanh", xtr @ w1.T + b1)
        ps2 = partial_max(h, w2, b2)
    recs = [
        "model name=digits-mlp input=64",
        f"layer kind=dense name=fc1 in=64 out=32 weight=fc1.w bias=fc1.b psum_max={fmt(ps1)}",
        "layer kind=tanh name=act1",
        f"layer kind=dense name=fc2 in=32 out=10 weight=fc2.w bias=fc2.b psum_max={fmt(ps2)}",
        "layer kind=softmax name=prob",
    ]
    ts = [("fc1.w", "f32", w1.numpy()), ("fc1.b", "f32", b1.numpy()),
          ("fc2.w", "f32", w2.numpy()), ("fc2.b", "f32", b2.numpy())]
    return container("model", recs, ts)


def conv_file(m, xtr):
    with torch.no_grad():
        S = xtr.shape[0]
        w1, b1 = m.c1.weight.detach(), m.c1.bias.detach()
        ps1 = partial_max(unfold(xtr.reshape(S, 1, 8, 8)), w1.reshape(8, 9), b1)
        h = scaled("relu", m.c1(xtr.reshape(S, 1, 8, 8)).reshape(S, 288))
        w2, b2 = m.fc.weight.detach(), m.fc.bias.detach()
        ps2 = partial_max(h, w2, b2)
    recs = [
        "model name=digits-conv input=1x8x8",
        f"layer kind=conv name=c1 in=1x8x8 out=8x6x6 k=3 stride=1 pad=0 weight=c1.w bias=c1.b psum_max={fmt(ps1)}",
        "layer kind=relu name=act1",
        f"layer kind=dense name=fc in=288 out=10 weight=fc.w bias=fc.b psum_max={fmt(ps2)}",
        "layer kind=softmax name=prob",
    ]
    ts = [("c1.w", "f32", w1.numpy()), ("c1.b", "f32", b1.numpy()),
          ("fc.w", "f32", w2.numpy()), ("fc.b", "f32", b2.numpy())]
    return container("model", recs, ts)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "fixtures"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--warmup", type=int, default=200)
    args = ap.parse_args()

    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)
    X, y = load_digits(return_X_y=True)
    X = (X / 16.0).astype(np.float32)
    xtr, xte, ytr, yte = train_test_split(X, y, test_size=0.5, stratify=y, random_state=args.seed)
    xt, yt = torch.tensor(xtr), torch.tensor(ytr)

    os.makedirs(args.out, exist_ok=True)
    for name, model, writer in (("digits_mlp.fpm", Mlp, mlp_file), ("digits_conv.fpm", Conv, conv_file)):
        torch.manual_seed(args.seed)
        m = model()
        train(m, xt, yt, args.epochs, args.warmup, args.seed)
        with torch.no_grad():
            acc = (m(torch.tensor(xte)).argmax(1).numpy() == yte).mean()
        data = writer(m, xt)
        with open(os.path.join(args.out, name), "wb") as f:
            f.write(data)
        print(f"{name}: float test top-1 {acc:.4f}")

    data = container("dataset", ["dataset name=digits-test input=64"],
                     [("inputs", "f32", xte), ("labels", "i32", yte.astype(np.int32))])
    with open(os.path.join(args.out, "digits_test.fpd"), "wb") as f:
        f.write(data)
    print(f"digits_test.fpd: {len(yte)} samples")


if __name__ == "__main__":
    main()
