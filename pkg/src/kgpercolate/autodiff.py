"""Tape-based reverse-mode automatic differentiation on numpy arrays.

Covers exactly the operations the percolation model needs: dense linear
algebra, elementwise activations, row gather/scatter, contiguous-segment
reductions with caller-supplied denominators, paired 2-D rotations, and a
stable logsumexp.  Records happen only inside a ``with Tape() as tape``
block; outside a tape every op is a plain numpy computation, which is what
evaluation uses.

Default precision is float32.  ``set_default_dtype("float64")`` switches
new tensors to double, which the gradient-check tests rely on.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

_DTYPE = np.float32
_DEBUG_FINITE = False
_ACTIVE_TAPE: "Tape | None" = None

STD_EPS = 1e-6  # inside the sqrt of segment_std


def set_default_dtype(name: str) -> None:
    global _DTYPE
    if name not in ("float32", "float64"):
        raise ValueError("dtype must be 'float32' or 'float64'")
    _DTYPE = np.float32 if name == "float32" else np.float64


def get_default_dtype() -> str:
    return np.dtype(_DTYPE).name


def set_debug_checks(enabled: bool) -> None:
    """When on, every op output is checked for NaN/inf (slow, for debugging)."""
    global _DEBUG_FINITE
    _DEBUG_FINITE = bool(enabled)


class Tensor:
    """A numpy array plus an accumulated gradient."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records ops applied inside the block; ``backward`` replays them."""

    def __init__(self):
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ValueError("backward needs a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for out, inputs, vjp in reversed(self._entries):
            if out.grad is None:
                continue
            grads = vjp(out.grad)
            for t, g in zip(inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                t.grad = g if t.grad is None else t.grad + g

    def clear(self) -> None:
        self._entries.clear()


def _out(data: np.ndarray, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    if _DEBUG_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values in op output")
    res = Tensor(data)
    if _ACTIVE_TAPE is not None and any(t.requires_grad for t in inputs):
        res.requires_grad = True
        _ACTIVE_TAPE._entries.append((res, inputs, vjp))
    return res


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def index_add(target: np.ndarray, idx: np.ndarray, values: np.ndarray) -> None:
    """target[idx] += values with duplicate indices accumulated.

    Sort + reduceat; much faster than np.add.at for the index volumes a
    batched subgraph produces.
    """
    if idx.size == 0:
        return
    order = np.argsort(idx, kind="stable")
    si = idx[order]
    sv = values[order]
    starts = np.flatnonzero(np.r_[True, si[1:] != si[:-1]])
    target[si[starts]] += np.add.reduceat(sv, starts, axis=0)


# ---------------------------------------------------------------- basic ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _out(data, (a, b), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _out(a.data + b.data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _out(a.data - b.data, (a, b), vjp)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _out(a.data * b.data, (a, b), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    return _out(a.data * c, (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _out(np.where(mask, a.data, 0), (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)
    return _out(data, (a,), lambda g: (g * (1 - data * data),))


def reshape(a: Tensor, shape) -> Tensor:
    return _out(
        a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),)
    )


def sum_all(a: Tensor, axis=None) -> Tensor:
    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(),)

    return _out(a.data.sum(axis=axis), (a,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    offs = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, offs, axis=axis))

    return _out(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        vjp,
    )


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    def vjp(g):
        da = np.zeros_like(a.data)
        da[start:stop] = g
        return (da,)

    return _out(a.data[start:stop], (a,), vjp)


def gather(a: Tensor, idx: np.ndarray) -> Tensor:
    """Row lookup a[idx]; duplicates in idx accumulate in the backward."""
    idx = np.asarray(idx)

    def vjp(g):
        da = np.zeros_like(a.data)
        index_add(da, idx, g)
        return (da,)

    return _out(a.data[idx], (a,), vjp)


def scatter_rows_add(a: Tensor, idx: np.ndarray, b: Tensor) -> Tensor:
    """out = a with out[idx] += b, duplicates accumulated."""
    idx = np.asarray(idx)
    data = a.data.copy()
    index_add(data, idx, b.data)

    def vjp(g):
        return g, g[idx]

    return _out(data, (a, b), vjp)


def logsumexp(a: Tensor, axis: int | None = None) -> Tensor:
    if a.data.size == 0:
        raise ValueError("logsumexp of an empty tensor")
    m = a.data.max(axis=axis, keepdims=True)
    s = np.exp(a.data - m).sum(axis=axis, keepdims=True)
    kept = m + np.log(s)
    squeeze_ax = tuple(range(a.data.ndim)) if axis is None else axis
    data = np.squeeze(kept, axis=squeeze_ax)

    def vjp(g):
        soft = np.exp(a.data - kept)
        if axis is None:
            return (soft * g,)
        return (soft * np.expand_dims(g, axis),)

    return _out(data, (a,), vjp)


# ---------------------------------------------------------- segment ops

def _check_segments(seg_ptr: np.ndarray, n_rows: int) -> None:
    if seg_ptr[0] != 0 or seg_ptr[-1] != n_rows:
        raise ValueError("seg_ptr must start at 0 and end at the row count")
    if np.any(np.diff(seg_ptr) < 0):
        raise ValueError("seg_ptr must be nondecreasing")


def _segment_sum_data(x: np.ndarray, seg_ptr: np.ndarray) -> np.ndarray:
    n_seg = len(seg_ptr) - 1
    out = np.zeros((n_seg,) + x.shape[1:], dtype=x.dtype)
    sizes = np.diff(seg_ptr)
    nonempty = sizes > 0
    if x.shape[0] and nonempty.any():
        # consecutive nonempty starts span any empty segments in between,
        # which contribute no rows, so reduceat still sums the right slices
        out[nonempty] = np.add.reduceat(x, seg_ptr[:-1][nonempty], axis=0)
    return out


def segment_sum(a: Tensor, seg_ptr: np.ndarray) -> Tensor:
    seg_ptr = np.asarray(seg_ptr)
    _check_segments(seg_ptr, a.data.shape[0])
    sizes = np.diff(seg_ptr)

    def vjp(g):
        return (np.repeat(g, sizes, axis=0),)

    return _out(_segment_sum_data(a.data, seg_ptr), (a,), vjp)


def segment_mean(a: Tensor, seg_ptr: np.ndarray, denom: np.ndarray) -> Tensor:
    """Segment sums divided by caller-given denominators (not segment sizes)."""
    seg_ptr = np.asarray(seg_ptr)
    _check_segments(seg_ptr, a.data.shape[0])
    denom = np.asarray(denom, dtype=a.data.dtype)
    sizes = np.diff(seg_ptr)
    inv = (1.0 / denom)[:, None]

    def vjp(g):
        return (np.repeat(g * inv, sizes, axis=0),)

    return _out(_segment_sum_data(a.data, seg_ptr) * inv, (a,), vjp)


def segment_std(a: Tensor, seg_ptr: np.ndarray, denom: np.ndarray) -> Tensor:
    """sqrt(relu(E[x^2] - E[x]^2) + eps) per segment, denominator-weighted."""
    seg_ptr = np.asarray(seg_ptr)
    _check_segments(seg_ptr, a.data.shape[0])
    denom = np.asarray(denom, dtype=a.data.dtype)
    sizes = np.diff(seg_ptr)
    inv = (1.0 / denom)[:, None]
    m1 = _segment_sum_data(a.data, seg_ptr) * inv
    m2 = _segment_sum_data(a.data * a.data, seg_ptr) * inv
    w = m2 - m1 * m1
    out_data = np.sqrt(np.maximum(w, 0) + STD_EPS)

    def vjp(g):
        coef = g * (w > 0) * inv / out_data
        dx = np.repeat(coef, sizes, axis=0) * (
            a.data - np.repeat(m1, sizes, axis=0)
        )
        return (dx,)

    return _out(out_data, (a,), vjp)


# --------------------------------------------------------- paired rotation

def rotate_pairs(e: Tensor, r: Tensor) -> Tensor:
    """Rotate consecutive coordinate pairs of e by angles encoded in r.

    r's pairs are projected to the unit circle first, so arbitrary real
    vectors parameterize pure rotations; gradients flow through the
    normalization.  Both arguments are (n, d) with d even.
    """
    n, d = e.data.shape
    if d % 2:
        raise ValueError("rotate_pairs needs an even feature dimension")
    if r.data.shape != e.data.shape:
        raise ValueError("entity and relation blocks must match in shape")
    ep = e.data.reshape(n, d // 2, 2)
    rp = r.data.reshape(n, d // 2, 2)
    norm = np.sqrt((rp * rp).sum(axis=2, keepdims=True) + 1e-12)
    c = rp[..., 0:1] / norm
    s = rp[..., 1:2] / norm
    x, y = ep[..., 0:1], ep[..., 1:2]
    out = np.concatenate([x * c - y * s, x * s + y * c], axis=2)

    def vjp(g):
        gp = g.reshape(n, d // 2, 2)
        gu, gv = gp[..., 0:1], gp[..., 1:2]
        de = np.concatenate([gu * c + gv * s, -gu * s + gv * c], axis=2)
        # through the normalization: d(c,s)/d(rc,rs) via the projection
        dc = gu * x + gv * y
        ds = -gu * y + gv * x
        rc, rs = rp[..., 0:1], rp[..., 1:2]
        n3 = norm**3
        drc = dc * (rs * rs + 1e-12) / n3 - ds * rc * rs / n3
        drs = -dc * rc * rs / n3 + ds * (rc * rc + 1e-12) / n3
        dr = np.concatenate([drc, drs], axis=2)
        return de.reshape(n, d), dr.reshape(n, d)

    return _out(out.reshape(n, d), (e, r), vjp)


# ----------------------------------------------------------------- optimizer

class Adam:
    """Adam with bias correction, over a name -> Tensor parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1c = 1 - self.beta1**self.t
        b2c = 1 - self.beta2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self._m[k]
            v = self._v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


# ---------------------------------------------------------------- checkpoints

def save_params(path, params: dict[str, Tensor], meta: dict | None = None) -> None:
    """Write parameters as one flat binary blob plus a JSON manifest.

    The manifest (path + '.json') records tensor order, shapes and byte
    offsets; the blob is raw array bytes in manifest order.
    """
    path = Path(path)
    blob = bytearray()
    entries = []
    for name, t in params.items():
        arr = np.ascontiguousarray(t.data)
        entries.append(
            {"name": name, "shape": list(arr.shape), "offset": len(blob)}
        )
        blob += arr.tobytes()
    manifest = {
        "format": "kgpercolate-checkpoint-v1",
        "dtype": get_default_dtype(),
        "tensors": entries,
        "meta": meta or {},
    }
    path.write_bytes(bytes(blob))
    path.with_name(path.name + ".json").write_text(
        json.dumps(manifest, indent=2, default=_json_default)
    )


def load_params(path) -> tuple[dict[str, Tensor], dict]:
    path = Path(path)
    manifest = json.loads(path.with_name(path.name + ".json").read_text())
    if manifest.get("format") != "kgpercolate-checkpoint-v1":
        raise ValueError(f"{path}: not a recognized checkpoint")
    dt = np.dtype(manifest["dtype"])
    blob = path.read_bytes()
    params: dict[str, Tensor] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            blob, dtype=dt, count=count, offset=entry["offset"]
        ).reshape(shape)
        params[entry["name"]] = Tensor(arr.copy(), requires_grad=True,
                                       name=entry["name"])
    return params, manifest.get("meta", {})


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o)}")
