"""Dense float64 tensors with a reverse-mode gradient tape.

Everything is a 2-D array (column vectors are shape (n, 1)).  Ops executed
inside a ``Tape`` context record their backward rules; outside any tape they
run forward-only, which doubles as the fast no-grad path.  No broadcasting is
performed except scalar * tensor; any other shape disagreement raises.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np


class Tensor2:
    """A rows x cols float64 value, optionally a gradient-carrying leaf."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise ValueError("Tensor2 data must be at most 2-D")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ValueError("item() requires a scalar tensor")
        return float(self.data[0, 0])

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return "Tensor2(%r, requires_grad=%r)" % (self.data, self.requires_grad)


class TapeError(RuntimeError):
    """Misuse of the tape: backward without a tape, or a consumed tape."""


_ACTIVE = []


class Tape:
    """Execution-ordered record of ops; backward replays it in reverse."""

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _ACTIVE.pop()
        assert popped is self
        return False

    def record(self, out, inputs, vjp):
        self._nodes.append((out, inputs, vjp))

    def backward(self, loss):
        if self._consumed:
            raise TapeError("tape already consumed; build a fresh tape")
        if loss.data.size != 1:
            raise TapeError("backward requires a scalar loss")
        self._consumed = True
        grads = {id(loss): np.ones((1, 1))}
        for out, inputs, vjp in reversed(self._nodes):
            g = grads.get(id(out))
            if g is None:
                continue
            for t, gt in zip(inputs, vjp(g)):
                if gt is None:
                    continue
                acc = grads.get(id(t))
                if acc is None:
                    grads[id(t)] = gt.copy()
                else:
                    acc += gt
        # Push accumulated gradients into the leaves.
        seen = set()
        for out, inputs, _ in self._nodes:
            for t in inputs:
                if t.requires_grad and id(t) not in seen:
                    seen.add(id(t))
                    g = grads.get(id(t))
                    if g is not None:
                        t.grad += g
        if loss.requires_grad and id(loss) not in seen:
            loss.grad += grads[id(loss)]


def _tape():
    return _ACTIVE[-1] if _ACTIVE else None


def backward(loss):
    """Run reverse-mode accumulation for ``loss`` on the active tape."""
    tape = _tape()
    if tape is None:
        raise TapeError("no active tape")
    tape.backward(loss)


def _finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError("non-finite value produced by %s" % op)
    return arr


def _make(data, op, inputs=None, vjp=None):
    out = Tensor2(_finite(data, op))
    tape = _tape()
    if tape is not None and vjp is not None:
        tape.record(out, inputs, vjp)
    return out


def matvec(w, x):
    """y = W x with W (m, n) and x (n, 1)."""
    m, n = w.shape
    if x.shape != (n, 1):
        raise ValueError("matvec shape mismatch: %s vs %s" % (w.shape, x.shape))
    y = w.data @ x.data

    def vjp(g):
        return g @ x.data.T, w.data.T @ g

    return _make(y, "matvec", (w, x), vjp)


def add(a, b):
    if a.shape != b.shape:
        raise ValueError("add shape mismatch: %s vs %s" % (a.shape, b.shape))
    return _make(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a, b):
    if a.shape != b.shape:
        raise ValueError("sub shape mismatch: %s vs %s" % (a.shape, b.shape))
    return _make(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def hadamard(a, b):
    if a.shape != b.shape:
        raise ValueError("hadamard shape mismatch: %s vs %s" % (a.shape, b.shape))

    def vjp(g):
        return g * b.data, g * a.data

    return _make(a.data * b.data, "hadamard", (a, b), vjp)


def scale(a, s):
    """s * a where s is a python float or a scalar Tensor2."""
    if isinstance(s, Tensor2):
        if s.data.size != 1:
            raise ValueError("scale factor must be scalar")

        def vjp(g):
            return g * s.data[0, 0], np.array([[np.sum(g * a.data)]])

        return _make(a.data * s.data[0, 0], "scale", (a, s), vjp)
    c = float(s)
    return _make(a.data * c, "scale", (a,), lambda g: (g * c,))


def concat(parts):
    """Vertically stack column vectors."""
    parts = list(parts)
    if not parts:
        raise ValueError("concat of an empty list")
    for p in parts:
        if p.shape[1] != 1:
            raise ValueError("concat expects column vectors")
    out = np.concatenate([p.data for p in parts], axis=0)
    sizes = [p.shape[0] for p in parts]

    def vjp(g):
        grads, ofs = [], 0
        for sz in sizes:
            grads.append(g[ofs:ofs + sz])
            ofs += sz
        return tuple(grads)

    return _make(out, "concat", tuple(parts), vjp)


def reduce_sum(a):
    def vjp(g):
        return (np.full_like(a.data, g[0, 0]),)

    return _make(np.array([[np.sum(a.data)]]), "reduce_sum", (a,), vjp)


def inner(a, b):
    if a.shape != b.shape or a.shape[1] != 1:
        raise ValueError("inner expects equal-shape column vectors")

    def vjp(g):
        return g[0, 0] * b.data, g[0, 0] * a.data

    val = float(np.sum(a.data * b.data))
    return _make(np.array([[val]]), "inner", (a, b), vjp)


def sigmoid(a):
    y = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return (g * y * (1.0 - y),)

    return _make(y, "sigmoid", (a,), vjp)


def relu(a):
    y = np.maximum(a.data, 0.0)

    def vjp(g):
        return (g * (a.data > 0.0),)

    return _make(y, "relu", (a,), vjp)


def softmax_cross_entropy(logits, label):
    """Mean-free cross-entropy of a single label against column logits."""
    k = logits.shape[0]
    if logits.shape[1] != 1:
        raise ValueError("logits must be a column vector")
    if not 0 <= label < k:
        raise ValueError("label %d out of range [0, %d)" % (label, k))
    z = logits.data[:, 0]
    m = np.max(z)
    ez = np.exp(z - m)
    probs = ez / np.sum(ez)
    loss = -(z[label] - m - np.log(np.sum(ez)))

    def vjp(g):
        d = probs.copy()
        d[label] -= 1.0
        return (g[0, 0] * d.reshape(-1, 1),)

    return _make(np.array([[loss]]), "softmax_cross_entropy", (logits,), vjp)


# ---------------------------------------------------------------------------
# Checkpoint format: <path>.json manifest + <path>.bin little-endian float64
# blob, tensors flattened row-major and concatenated in manifest order.
# ---------------------------------------------------------------------------

def save_checkpoint(path_prefix, named_tensors, meta=None):
    manifest = {"meta": meta or {}, "tensors": []}
    blob = bytearray()
    for name, t in named_tensors:
        r, c = t.shape
        manifest["tensors"].append({"name": name, "rows": r, "cols": c})
        blob += np.ascontiguousarray(t.data, dtype="<f8").tobytes()
    with open(path_prefix + ".json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(path_prefix + ".bin", "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path_prefix):
    with open(path_prefix + ".json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    with open(path_prefix + ".bin", "rb") as fh:
        blob = fh.read()
    tensors, ofs = [], 0
    for entry in manifest["tensors"]:
        r, c = entry["rows"], entry["cols"]
        n = r * c * 8
        arr = np.frombuffer(blob[ofs:ofs + n], dtype="<f8").reshape(r, c)
        ofs += n
        tensors.append((entry["name"], Tensor2(arr.copy())))
    if ofs != len(blob):
        raise ValueError("checkpoint blob size disagrees with manifest")
    return tensors, manifest.get("meta", {})
