#!/usr/bin/env python3
"""Writes tiny_model.eogs and tiny_model_expected.json.

The checkpoint bytes are produced here from the format description alone, and
the expected outputs come from a PyTorch re-implementation of the network, so
the C++ loader and forward pass are checked against code that shares nothing
with them.
"""
import hashlib
import json
import math
import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

HERE = Path(__file__).resolve().parent

CONFIG = {
    "samples_per_epoch": 64,
    "window_size": 3,
    "stem": {"channels": 4, "kernel": 5, "stride": 2},
    "residual_blocks": [
        {"channels": 4, "kernel": 3, "stride": 2},
        {"channels": 8, "kernel": 3, "stride": 2},
    ],
    "se_reduction": 2,
    "d_model": 16,
    "transformer": {"layers": 1, "heads": 2, "ff_dim": 32},
    "num_classes": 5,
    "positional_encoding": "sinusoidal",
    "dropout": 0.0,
    "norm_eps": 1e-5,
}
TRAINING = {"fold": 3, "step": 1234, "seed": 99}
EPS = CONFIG["norm_eps"]


def build_params(rng):
    params, buffers = [], []

    def weight(name, shape):
        fan_in = int(np.prod(shape[1:]))
        b = 1.0 / math.sqrt(fan_in)
        params.append((name, rng.uniform(-b, b, size=shape).astype(np.float32)))

    def vec(name, n, base, spread):
        params.append((name, (base + spread * rng.uniform(-1, 1, size=(n,))).astype(np.float32)))

    def bn(prefix, c):
        vec(prefix + ".gamma", c, 1.0, 0.2)
        vec(prefix + ".beta", c, 0.0, 0.2)
        buffers.append((prefix + ".running_mean", (0.1 * rng.standard_normal(c)).astype(np.float32)))
        buffers.append((prefix + ".running_var", (1.0 + 0.5 * rng.uniform(0, 1, c)).astype(np.float32)))

    def dense(prefix, din, dout):
        weight(prefix + ".weight", (dout, din))
        vec(prefix + ".bias", dout, 0.0, 0.1)

    c = CONFIG
    weight("stem.conv.weight", (c["stem"]["channels"], 1, c["stem"]["kernel"]))
    bn("stem.bn", c["stem"]["channels"])
    cin = c["stem"]["channels"]
    for i, b in enumerate(c["residual_blocks"]):
        p = f"blocks.{i}"
        co, k = b["channels"], b["kernel"]
        weight(p + ".conv1.weight", (co, cin, k))
        bn(p + ".bn1", co)
        weight(p + ".conv2.weight", (co, co, k))
        bn(p + ".bn2", co)
        weight(p + ".se.w1", (co // c["se_reduction"], co))
        weight(p + ".se.w2", (co, co // c["se_reduction"]))
        if cin != co or b["stride"] != 1:
            weight(p + ".shortcut.conv.weight", (co, cin, 1))
            bn(p + ".shortcut.bn", co)
        cin = co
    d = c["d_model"]
    dense("proj", cin, d)
    for i in range(c["transformer"]["layers"]):
        p = f"layers.{i}"
        for n in "qkvo":
            dense(f"{p}.attn.{n}", d, d)
        vec(p + ".norm1.gamma", d, 1.0, 0.2)
        vec(p + ".norm1.beta", d, 0.0, 0.2)
        dense(p + ".ff1", d, c["transformer"]["ff_dim"])
        dense(p + ".ff2", c["transformer"]["ff_dim"], d)
        vec(p + ".norm2.gamma", d, 1.0, 0.2)
        vec(p + ".norm2.beta", d, 0.0, 0.2)
    dense("head", d, c["num_classes"])
    return params + buffers


def write_checkpoint(path, tensors):
    blob = json.dumps({"model": CONFIG, "training": TRAINING}, sort_keys=True).encode()
    out = bytearray(b"EOGS")
    out += struct.pack("<HI", 1, len(blob)) + blob
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors:
        nb = name.encode()
        out += struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim)
        out += b"".join(struct.pack("<I", d) for d in arr.shape)
        out += arr.astype("<f4").tobytes()
    path.write_bytes(bytes(out))


def forward(t, x, training):
    """x: [B, W, 1, S] float64. Returns (log_probs, last_conv)."""
    c = CONFIG
    B, W, _, S = x.shape
    h = x.reshape(B * W, 1, S)

    def bn(h, prefix):
        return F.batch_norm(h, t[prefix + ".running_mean"], t[prefix + ".running_var"],
                            t[prefix + ".gamma"], t[prefix + ".beta"], training, 0.1, EPS)

    k = c["stem"]["kernel"]
    h = F.conv1d(h, t["stem.conv.weight"], None, c["stem"]["stride"], k // 2)
    h = F.relu(bn(h, "stem.bn"))
    for i, b in enumerate(c["residual_blocks"]):
        p = f"blocks.{i}"
        k = b["kernel"]
        m = F.conv1d(h, t[p + ".conv1.weight"], None, b["stride"], k // 2)
        m = F.relu(bn(m, p + ".bn1"))
        m = F.conv1d(m, t[p + ".conv2.weight"], None, 1, k // 2)
        m = bn(m, p + ".bn2")
        s = m.mean(dim=2)
        e = torch.sigmoid(F.relu(s @ t[p + ".se.w1"].T) @ t[p + ".se.w2"].T)
        m = m * e[:, :, None]
        if p + ".shortcut.conv.weight" in t:
            sc = bn(F.conv1d(h, t[p + ".shortcut.conv.weight"], None, b["stride"], 0), p + ".shortcut.bn")
        else:
            sc = h
        h = F.relu(m + sc)
    last_conv = h
    tok = h.mean(dim=2) @ t["proj.weight"].T + t["proj.bias"]
    d = c["d_model"]
    x = tok.reshape(B, W, d)
    pe = torch.zeros(W, d, dtype=torch.float64)
    for pos in range(W):
        for i in range(0, d, 2):
            a = pos / 10000 ** (i / d)
            pe[pos, i] = math.sin(a)
            pe[pos, i + 1] = math.cos(a)
    x = x + pe
    H = c["transformer"]["heads"]
    dk = d // H
    for li in range(c["transformer"]["layers"]):
        p = f"layers.{li}"
        lin = lambda v, n: v @ t[n + ".weight"].T + t[n + ".bias"]
        q = lin(x, p + ".attn.q").reshape(B, W, H, dk).transpose(1, 2)
        kk = lin(x, p + ".attn.k").reshape(B, W, H, dk).transpose(1, 2)
        v = lin(x, p + ".attn.v").reshape(B, W, H, dk).transpose(1, 2)
        a = torch.softmax(q @ kk.transpose(-1, -2) / math.sqrt(dk), dim=-1) @ v
        a = lin(a.transpose(1, 2).reshape(B, W, d), p + ".attn.o")
        x = F.layer_norm(x + a, (d,), t[p + ".norm1.gamma"], t[p + ".norm1.beta"], EPS)
        f = lin(F.relu(lin(x, p + ".ff1")), p + ".ff2")
        x = F.layer_norm(x + f, (d,), t[p + ".norm2.gamma"], t[p + ".norm2.beta"], EPS)
    logits = x[:, (W - 1) // 2] @ t["head.weight"].T + t["head.bias"]
    return F.log_softmax(logits, dim=-1), last_conv


def main():
    rng = np.random.default_rng(20240611)
    tensors = build_params(rng)
    write_checkpoint(HERE / "tiny_model.eogs", tensors)

    digest = hashlib.sha256(b"".join(a.astype("<f4").tobytes() for _, a in tensors)).hexdigest()

    x = rng.standard_normal((2, CONFIG["window_size"], 1, CONFIG["samples_per_epoch"]))
    t = {n: torch.tensor(a.astype(np.float64)) for n, a in tensors}
    xt = torch.tensor(x)
    eval_lp, last_conv = forward(t, xt, False)
    t_train = {n: v.clone() for n, v in t.items()}
    train_lp, _ = forward(t_train, xt, True)

    expected = {
        "parameter_sha256": digest,
        "tensor_count": len(tensors),
        "input_shape": list(x.shape),
        "input": x.reshape(-1).tolist(),
        "eval_log_probs": eval_lp.reshape(-1).tolist(),
        "train_log_probs": train_lp.reshape(-1).tolist(),
        "last_conv_shape": list(last_conv.shape),
        "last_conv_sum": float(last_conv.sum()),
        "stem_running_mean_after_train": t_train["stem.bn.running_mean"].tolist(),
        "stem_running_var_after_train": t_train["stem.bn.running_var"].tolist(),
    }
    (HERE / "tiny_model_expected.json").write_text(json.dumps(expected, indent=1) + "\n")


if __name__ == "__main__":
    main()
