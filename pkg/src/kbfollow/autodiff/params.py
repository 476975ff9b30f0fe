"""Named model parameters, optimizers, and the checkpoint file format.

Checkpoint layout: 8-byte little-endian header length, a UTF-8 JSON header
``{"dtype", "params": [{"name", "shape"}], "meta"}``, then every array's
values row-major, little-endian, in header order.
"""
from __future__ import annotations

import json
import struct

import numpy as np


class ModelParams:
    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.opt_state: dict = {}

    def add(self, name, value) -> np.ndarray:
        if name in self.values:
            raise ValueError(f"parameter {name!r} already exists")
        v = np.array(value, dtype=self.dtype)
        self.values[name] = v
        self.grads[name] = np.zeros(v.shape, dtype=np.float64)
        return v

    def uniform(self, name, shape, bound, rng):
        return self.add(name, rng.uniform(-bound, bound, size=shape))

    def glorot(self, name, shape, rng):
        bound = np.sqrt(6.0 / (shape[0] + shape[-1]))
        return self.add(name, rng.uniform(-bound, bound, size=shape))

    def zeros(self, name, shape):
        return self.add(name, np.zeros(shape))

    def __getitem__(self, name):
        return self.values[name]

    def __setitem__(self, name, value):
        value = np.asarray(value)
        if value.shape != self.values[name].shape:
            raise ValueError(f"shape of {name!r} is fixed at {self.values[name].shape}")
        self.values[name] = value.astype(self.dtype)

    def __contains__(self, name):
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def names(self):
        return list(self.values)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def n_values(self) -> int:
        return sum(v.size for v in self.values.values())


def sgd_step(params: ModelParams, lr: float):
    for name, v in params.values.items():
        params.values[name] = (v - lr * params.grads[name]).astype(params.dtype)


def adam_step(params: ModelParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8, clip=None):
    """One Adam update from the accumulated gradients; ``clip`` bounds the global grad norm."""
    st = params.opt_state
    t = st.get("t", 0) + 1
    st["t"] = t
    scale = 1.0
    if clip is not None:
        norm = np.sqrt(sum(float((g * g).sum()) for g in params.grads.values()))
        if norm > clip:
            scale = clip / norm
    m_all = st.setdefault("m", {})
    v_all = st.setdefault("v", {})
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, val in params.values.items():
        g = params.grads[name] * scale
        m = m_all.get(name)
        if m is None:
            m = m_all[name] = np.zeros(val.shape)
            v_all[name] = np.zeros(val.shape)
        v = v_all[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        params.values[name] = (val - step).astype(params.dtype)


def save_checkpoint(params: ModelParams, path, meta=None):
    dt = params.dtype.newbyteorder("<")
    header = {
        "dtype": params.dtype.name,
        "params": [{"name": n, "shape": list(v.shape)} for n, v in params.values.items()],
        "meta": meta or {},
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(hb)))
        f.write(hb)
        for v in params.values.values():
            f.write(np.ascontiguousarray(v, dtype=dt).tobytes())


def load_checkpoint(path):
    """Return (params, meta)."""
    with open(path, "rb") as f:
        (n,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(n).decode("utf-8"))
        dtype = np.dtype(header["dtype"])
        params = ModelParams(dtype)
        le = dtype.newbyteorder("<")
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            buf = f.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise ValueError(f"checkpoint truncated in {entry['name']!r}")
            params.add(entry["name"], np.frombuffer(buf, dtype=le).reshape(shape))
        if f.read(1):
            raise ValueError("trailing bytes after checkpoint payload")
    return params, header["meta"]
