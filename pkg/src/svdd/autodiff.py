"""Minimal dense-tensor arithmetic with reverse-mode differentiation.

Tensors are immutable numpy-backed arrays (float32 storage by default,
float64 opt-in for high-precision gradient verification).  Operations
executed inside an active ``Tape`` context record backward closures;
``Tape.gradients`` replays them in reverse order, accumulating gradients
additively at fan-out points.

Broadcasting is deliberately limited to scalar-tensor forms plus a
row-wise bias add; everything a network here needs is expressible with
the primitives below.
"""

from __future__ import annotations

import threading

import numpy as np

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


class DimensionError(ValueError):
    pass


class Tensor:
    """Immutable dense tensor. NaN/Inf are rejected at construction."""

    __slots__ = ("data",)

    def __init__(self, data, dtype=np.float32):
        arr = np.array(data, dtype=dtype)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        arr.setflags(write=False)
        self.data = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # internal fast path: arr is freshly computed and owned by the op
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite values produced by operation")
        arr.setflags(write=False)
        out = object.__new__(cls)
        out.data = arr
        return out

    @classmethod
    def zeros(cls, shape, dtype=np.float32) -> "Tensor":
        return cls._wrap(np.zeros(shape, dtype=dtype))

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


class Parameter:
    """A trainable tensor with an accumulated gradient of identical shape."""

    __slots__ = ("value", "grad")

    def __init__(self, value: Tensor):
        self.value = value
        self.grad = np.zeros(value.shape, dtype=value.dtype)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def assign(self, arr: np.ndarray):
        """Replace the value in place (optimizer step). Grad shape is kept."""
        if arr.shape != self.value.shape:
            raise DimensionError(
                f"assign shape {arr.shape} != parameter shape {self.value.shape}")
        self.value = Tensor._wrap(np.array(arr, dtype=self.value.dtype))


_tls = threading.local()


def _active_tape():
    return getattr(_tls, "tape", None)


class Tape:
    """Ordered record of primitive ops for one single-threaded forward pass."""

    def __init__(self):
        self._records = []  # (out, inputs, backward_fn)

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a Tape is already active on this thread")
        _tls.tape = self
        return self

    def __exit__(self, *exc):
        _tls.tape = None
        return False

    def _record(self, out, inputs, backward):
        self._records.append((out, inputs, backward))

    def gradients(self, loss: Tensor) -> "Gradients":
        """Backward pass from a scalar loss; returns gradients per tensor."""
        if loss.size != 1:
            raise DimensionError("gradients() requires a scalar loss")
        grads = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
        for out, inputs, backward in reversed(self._records):
            g = grads.get(id(out))
            if g is None:
                continue
            for t, gi in zip(inputs, backward(g)):
                if gi is None:
                    continue
                acc = grads.get(id(t))
                if acc is None:
                    grads[id(t)] = gi.astype(t.dtype, copy=False)
                else:
                    grads[id(t)] = acc + gi.astype(t.dtype, copy=False)
        return Gradients(grads)


class Gradients:
    def __init__(self, by_id):
        self._by_id = by_id

    def wrt(self, t: Tensor) -> np.ndarray:
        """Gradient w.r.t. a tensor; zeros if it did not influence the loss."""
        g = self._by_id.get(id(t))
        if g is None:
            return np.zeros(t.shape, dtype=t.dtype)
        return g

    def accumulate(self, params) -> None:
        """Add gradients into each Parameter.grad (params: iterable or dict)."""
        values = params.values() if hasattr(params, "values") else params
        for p in values:
            p.grad += self.wrt(p.value)


def _emit(out_arr, inputs, backward) -> Tensor:
    out = Tensor._wrap(out_arr)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, inputs, backward)
    return out


def _check_same_shape(a: Tensor, b: Tensor, opname: str):
    if a.shape != b.shape:
        raise DimensionError(f"{opname}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        _check_same_shape(a, b, "add")
        return _emit(a.data + b.data, (a, b), lambda g: (g, g))
    s = float(b)
    return _emit(a.data + np.asarray(s, dtype=a.dtype), (a,), lambda g: (g,))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def neg(a: Tensor) -> Tensor:
    return _emit(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        _check_same_shape(a, b, "mul")
        return _emit(a.data * b.data, (a, b),
                     lambda g: (g * b.data, g * a.data))
    s = float(b)
    return _emit(a.data * np.asarray(s, dtype=a.dtype), (a,),
                 lambda g: (g * s,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _emit(out, (a, b), backward)


def add_rowwise(x: Tensor, bias: Tensor) -> Tensor:
    """x[m, n] + bias[n] broadcast over rows (the one bias-shaped broadcast)."""
    if x.ndim != 2 or bias.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise DimensionError(f"add_rowwise: {x.shape} + {bias.shape}")
    return _emit(x.data + bias.data[None, :], (x, bias),
                 lambda g: (g, g.sum(axis=0)))


def mul_along_axis0(t: Tensor, v: Tensor) -> Tensor:
    """Scale slice t[i] by scalar v[i]; v is 1-D with len == t.shape[0]."""
    if v.ndim != 1 or t.shape[0] != v.shape[0]:
        raise DimensionError(f"mul_along_axis0: {t.shape} scaled by {v.shape}")
    vb = v.data.reshape((-1,) + (1,) * (t.ndim - 1))

    def backward(g):
        axes = tuple(range(1, t.ndim))
        return g * vb, (g * t.data).sum(axis=axes)

    return _emit(t.data * vb, (t, v), backward)


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _emit(np.where(mask, a.data, 0).astype(a.dtype), (a,),
                 lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid_np(a.data).astype(a.dtype)
    return _emit(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _emit(out, (a,), lambda g: (g * (1.0 - out * out),))


def selu(a: Tensor) -> Tensor:
    lam, alpha = SELU_LAMBDA, SELU_ALPHA
    pos = a.data > 0
    expd = np.exp(np.minimum(a.data, 0.0))
    out = np.where(pos, lam * a.data, lam * alpha * (expd - 1.0)).astype(a.dtype)

    def backward(g):
        return (g * np.where(pos, lam, lam * alpha * expd),)

    return _emit(out, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    if not np.all(np.isfinite(out)):
        raise ValueError("exp overflow")
    return _emit(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ValueError("log of non-positive value")
    return _emit(np.log(a.data), (a,), lambda g: (g / a.data,))


def softplus(a: Tensor) -> Tensor:
    # log(1 + e^x), computed as max(x, 0) + log1p(e^-|x|)
    x = a.data
    out = (np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))).astype(a.dtype)
    return _emit(out, (a,), lambda g: (g * _sigmoid_np(x),))


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


ELEMENTWISE = {"sigmoid": sigmoid, "relu": relu, "selu": selu,
               "add": add, "mul": mul}


def elementwise(name: str, *args) -> Tensor:
    try:
        fn = ELEMENTWISE[name]
    except KeyError:
        raise ValueError(f"unknown elementwise op {name!r}") from None
    return fn(*args)


# ---------------------------------------------------------------------------
# reductions


def _norm_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    axes = tuple(sorted({a % ndim for a in axes}))
    for a in axes:
        if not 0 <= a < ndim:
            raise DimensionError(f"axis {a} invalid for ndim {ndim}")
    return axes


def reduce_sum(t: Tensor, axes=None) -> Tensor:
    axes = _norm_axes(axes, t.ndim)
    if not axes:
        return t
    out = t.data.sum(axis=axes, dtype=np.float64).astype(t.dtype)

    def backward(g):
        ge = np.expand_dims(g, axes)
        return (np.broadcast_to(ge, t.shape).astype(t.dtype),)

    return _emit(out, (t,), backward)


def reduce_mean(t: Tensor, axes=None) -> Tensor:
    axes = _norm_axes(axes, t.ndim)
    if not axes:
        return t
    count = int(np.prod([t.shape[a] for a in axes]))
    out = t.data.mean(axis=axes, dtype=np.float64).astype(t.dtype)

    def backward(g):
        ge = np.expand_dims(g / count, axes)
        return (np.broadcast_to(ge, t.shape).astype(t.dtype),)

    return _emit(out, (t,), backward)


def reduce_max(t: Tensor, axes=None) -> Tensor:
    """Max over axes; backward routes gradient to the first argmax on ties."""
    axes = _norm_axes(axes, t.ndim)
    if not axes:
        return t
    kept = tuple(a for a in range(t.ndim) if a not in axes)
    perm = kept + axes
    moved = t.data.transpose(perm)
    kept_shape = moved.shape[:len(kept)]
    flat = moved.reshape(kept_shape + (-1,))
    idx = np.asarray(flat.argmax(axis=-1))  # first occurrence on ties
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gmoved = gflat.reshape(moved.shape)
        return (gmoved.transpose(np.argsort(perm)),)

    return _emit(np.ascontiguousarray(out), (t,), backward)


REDUCES = {"sum": reduce_sum, "mean": reduce_mean, "max": reduce_max}


def reduce(name: str, t: Tensor, axes=None) -> Tensor:
    try:
        fn = REDUCES[name]
    except KeyError:
        raise ValueError(f"unknown reduction {name!r}") from None
    return fn(t, axes)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    axis = axis % t.ndim
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = (e / e.sum(axis=axis, keepdims=True)).astype(t.dtype)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _emit(out, (t,), backward)


# ---------------------------------------------------------------------------
# structural ops


def reshape(t: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    # .copy() rather than ascontiguousarray: the latter promotes 0-d to (1,)
    out = t.data.reshape(shape).copy(order="C")
    return _emit(out, (t,),
                 lambda g: (g.reshape(t.shape),))


def transpose(t: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _emit(np.ascontiguousarray(t.data.transpose(axes)), (t,),
                 lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p)
                     for p in np.split(g, splits, axis=axis))

    return _emit(out, tuple(tensors), backward)


def take_rows(t: Tensor, indices) -> Tensor:
    """Select rows of a 2-D tensor; backward scatters into the kept rows."""
    if t.ndim != 2:
        raise DimensionError("take_rows expects a 2-D tensor")
    idx = np.asarray(indices, dtype=np.intp)

    def backward(g):
        full = np.zeros(t.shape, dtype=t.dtype)
        np.add.at(full, idx, g)
        return (full,)

    return _emit(np.ascontiguousarray(t.data[idx]), (t,), backward)


def dropout(t: Tensor, rate: float, mode: str, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; eval mode is the identity. Mask comes from rng only."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout mode must be train|eval, got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return t
    keep = (rng.random(t.shape) >= rate)
    scale = 1.0 / (1.0 - rate)
    mask = keep.astype(t.dtype) * scale
    return _emit(t.data * mask, (t,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# convolution and normalization


def _same_pad(n: int, k: int, s: int):
    out = -(-n // s)  # ceil(n / s)
    total = max((out - 1) * s + k - n, 0)
    return out, total // 2, total - total // 2


def conv2d(x: Tensor, w: Tensor, stride=(1, 1)) -> Tensor:
    """2-D convolution (cross-correlation), 'same'-style output ceil(n/s).

    x: [C_in, H, W]; w: [C_out, C_in, kh, kw].
    """
    if x.ndim != 3 or w.ndim != 4 or x.shape[0] != w.shape[1]:
        raise DimensionError(f"conv2d: input {x.shape} vs kernel {w.shape}")
    cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    sh, sw = stride
    oh, pt, pb = _same_pad(h, kh, sh)
    ow, pl, pr = _same_pad(wd, kw, sw)
    xp = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr)))

    # im2col: columns [cin*kh*kw, oh*ow]
    cols = np.empty((cin, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i:i + oh * sh:sh, j:j + ow * sw:sw]
    cols2 = cols.reshape(cin * kh * kw, oh * ow)
    wmat = w.data.reshape(cout, cin * kh * kw)
    out = (wmat @ cols2).reshape(cout, oh, ow)

    def backward(g):
        gmat = g.reshape(cout, oh * ow)
        dw = (gmat @ cols2.T).reshape(w.shape)
        dcols = (wmat.T @ gmat).reshape(cin, kh, kw, oh, ow)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i:i + oh * sh:sh, j:j + ow * sw:sw] += dcols[:, i, j]
        dx = dxp[:, pt:pt + h, pl:pl + wd]
        return np.ascontiguousarray(dx), dw

    return _emit(out, (x, w), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, axis: int,
               eps: float = 1e-5) -> Tensor:
    """Normalize over one axis; gain/bias are 1-D of that axis length."""
    axis = axis % x.ndim
    n = x.shape[axis]
    if gain.shape != (n,) or bias.shape != (n,):
        raise DimensionError(
            f"layer_norm: gain/bias must have shape ({n},), got "
            f"{gain.shape}/{bias.shape}")
    mean = x.data.mean(axis=axis, keepdims=True, dtype=np.float64)
    var = x.data.var(axis=axis, keepdims=True, dtype=np.float64)
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = ((x.data - mean) * inv).astype(x.dtype)
    bshape = [1] * x.ndim
    bshape[axis] = n
    gg = gain.data.reshape(bshape)
    out = xhat * gg + bias.data.reshape(bshape)

    def backward(g):
        other = tuple(a for a in range(x.ndim) if a != axis)
        dgain = (g * xhat).sum(axis=other)
        dbias = g.sum(axis=other)
        dxhat = g * gg
        m1 = dxhat.mean(axis=axis, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=axis, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx.astype(x.dtype), dgain, dbias

    return _emit(out, (x, gain, bias), backward)


# ---------------------------------------------------------------------------
# finite-difference oracle


def finite_difference_grad(f, x: Tensor, h: float = 1e-3) -> Tensor:
    """Central-difference gradient of a scalar function at x.

    f takes a Tensor and returns a float; values are accumulated in
    64-bit regardless of x's storage dtype.
    """
    flat = x.data.ravel()
    grad = np.zeros(flat.shape, dtype=np.float64)
    for i in range(flat.size):
        plus = flat.copy()
        minus = flat.copy()
        plus[i] += h
        minus[i] -= h
        fp = float(f(Tensor(plus.reshape(x.shape), dtype=x.dtype)))
        fm = float(f(Tensor(minus.reshape(x.shape), dtype=x.dtype)))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError("finite_difference_grad: non-finite function value")
        # use the actually-stored perturbations to halve representation error
        hp = float(np.asarray(plus[i], dtype=x.dtype)) - float(flat[i])
        hm = float(flat[i]) - float(np.asarray(minus[i], dtype=x.dtype))
        grad[i] = (fp - fm) / (hp + hm)
    return Tensor(grad.reshape(x.shape), dtype=np.float64)
