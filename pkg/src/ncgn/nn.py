"""Layers, optimizer, EMA and checkpoint I/O on top of the tensor engine."""

from __future__ import annotations

import struct

import numpy as np

from .tensor import Tensor, concat


class Module:
    """Base class: parameters are discovered recursively by attribute walk."""

    def named_parameters(self, prefix=""):
        out = []
        for name, val in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(val, Tensor) and val.requires_grad:
                out.append((key, val))
            elif isinstance(val, Module):
                out.extend(val.named_parameters(prefix=f"{key}."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(prefix=f"{key}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{key}.{i}", item))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_arrays(self):
        """All persistent arrays (parameters plus buffers such as running stats)."""
        out = dict(self.named_parameters())
        for name, buf in self.named_buffers():
            out[name] = buf
        return out

    def named_buffers(self, prefix=""):
        out = []
        for name, val in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(val, Module):
                out.extend(val.named_buffers(prefix=f"{key}."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.extend(item.named_buffers(prefix=f"{key}.{i}."))
            elif isinstance(val, Tensor) and not val.requires_grad and name.startswith("running_"):
                out.append((key, val))
        return out

    def train(self):
        self._set_mode(True)

    def eval(self):
        self._set_mode(False)

    def _set_mode(self, training):
        for val in vars(self).values():
            if isinstance(val, Module):
                val._set_mode(training)
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        item._set_mode(training)
        if hasattr(self, "training"):
            self.training = training


class Linear(Module):
    def __init__(self, d_in, d_out, rng):
        scale = np.sqrt(2.0 / (d_in + d_out))
        self.weight = Tensor(rng.normal(0.0, scale, size=(d_in, d_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class BatchNorm(Module):
    """Per-channel batch normalization over node rows.

    The first training batch seeds the running statistics directly, so a
    single train step followed by eval reproduces that batch's stats;
    subsequent batches blend with momentum 0.1.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = Tensor(np.zeros(channels))
        self.running_var = Tensor(np.ones(channels))
        self._initialized = False
        self.training = True

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2:
            raise ValueError("batch norm expects nodes x channels")
        if self.training:
            if x.data.shape[0] < 1:
                raise ValueError("batch norm needs at least one row in train mode")
            mu = x.mean(axis=0, keepdims=True)
            var = ((x - mu) ** 2).mean(axis=0, keepdims=True)
            xhat = (x - mu) / ((var + self.eps) ** 0.5)
            m, v = mu.data.ravel(), var.data.ravel()
            if not self._initialized:
                self.running_mean.data[:] = m
                self.running_var.data[:] = v
                self._initialized = True
            else:
                self.running_mean.data *= 1.0 - self.momentum
                self.running_mean.data += self.momentum * m
                self.running_var.data *= 1.0 - self.momentum
                self.running_var.data += self.momentum * v
        else:
            xhat = (x - self.running_mean.data[None, :]) / np.sqrt(
                self.running_var.data[None, :] + self.eps
            )
        return xhat * self.gamma + self.beta


class MLP(Module):
    """GELU MLP over a list of layer widths, e.g. [d_in, h, h, d_out].

    Hidden layers get batch norm when ``norm`` is on; the final linear is
    always bare.
    """

    def __init__(self, widths, rng, norm=False):
        self.layers = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        self.norms = [BatchNorm(b) for b in widths[1:-1]] if norm else []

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, lin in enumerate(self.layers):
            x = lin(x)
            if i < last:
                if self.norms:
                    x = self.norms[i](x)
                x = x.gelu()
        return x


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            mhat = m / (1.0 - self.b1**self.t)
            vhat = v / (1.0 - self.b2**self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


class EMA:
    """Exponential moving average of a module's state arrays."""

    def __init__(self, module: Module, decay=0.95):
        self.decay = decay
        self.shadow = {k: t.data.copy() for k, t in module.state_arrays().items()}

    def update(self, module: Module):
        for k, t in module.state_arrays().items():
            s = self.shadow[k]
            s *= self.decay
            s += (1.0 - self.decay) * t.data

    def copy_to(self, module: Module):
        for k, t in module.state_arrays().items():
            t.data[:] = self.shadow[k].reshape(t.data.shape)


# ----------------------------------------------------------------------
# checkpoint format: one binary file of little-endian float64 arrays, each
# preceded by a shape header (uint32 ndim, uint32 dims), in manifest order;
# the sidecar <path>.manifest lists "name: d0xd1" per line.


def save_checkpoint(path, arrays):
    """``arrays``: mapping name -> numpy array (or Tensor)."""
    names = list(arrays.keys())
    with open(path, "wb") as fh:
        for name in names:
            arr = arrays[name]
            data = np.asarray(arr.data if isinstance(arr, Tensor) else arr, dtype="<f8")
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())
    with open(str(path) + ".manifest", "w") as fh:
        for name in names:
            arr = arrays[name]
            data = np.asarray(arr.data if isinstance(arr, Tensor) else arr)
            fh.write(f"{name}: {'x'.join(str(s) for s in data.shape)}\n")


def load_checkpoint(path):
    names = []
    with open(str(path) + ".manifest") as fh:
        for line in fh:
            line = line.strip()
            if line:
                names.append(line.split(":")[0].strip())
    out = {}
    with open(path, "rb") as fh:
        for name in names:
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            out[name] = data.astype(np.float64)
    return out


def load_into(module: Module, arrays):
    state = module.state_arrays()
    for name, arr in arrays.items():
        if name not in state:
            raise KeyError(f"unknown parameter {name!r}")
        state[name].data[:] = arr.reshape(state[name].data.shape)
    for bn in _batch_norms(module):
        bn._initialized = True


def _batch_norms(module):
    out = []
    for val in vars(module).values():
        if isinstance(val, BatchNorm):
            out.append(val)
        elif isinstance(val, Module):
            out.extend(_batch_norms(val))
        elif isinstance(val, (list, tuple)):
            for item in val:
                if isinstance(item, Module):
                    out.extend(_batch_norms(item))
    return out


__all__ = [
    "Module",
    "Linear",
    "BatchNorm",
    "MLP",
    "Adam",
    "EMA",
    "concat",
    "save_checkpoint",
    "load_checkpoint",
    "load_into",
]
