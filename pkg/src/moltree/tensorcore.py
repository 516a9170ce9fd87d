"""Dense float64 tensors with taped reverse-mode differentiation.

A :class:`Tape` records one forward pass; recording order is a topological
order, so the backward sweep is a single reverse traversal.  Gradients
accumulate persistently only into parameters (tensors constructed with a
gradient buffer); intermediate adjoints live per-backward-call, which makes
repeated ``backward`` calls add identical contributions.

All ops take the tape as their first argument; ``tape=None`` runs the same
computation without recording (inference mode).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .kernels import segment_sum_rows

__all__ = [
    "Tensor",
    "Tape",
    "ParamStore",
    "ShapeMismatch",
    "NotScalar",
    "backward",
    "sgd_step",
    "adam_step",
]


class ShapeMismatch(ValueError):
    """Operands have incompatible shapes."""


class NotScalar(ValueError):
    """Backward was started from a non-scalar tensor."""


class Tensor:
    """A float64 array plus an optional persistent gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data, *, param: bool = False) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = np.zeros_like(self.data) if param else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        kind = "param" if self.grad is not None else "tensor"
        return f"Tensor({kind}, shape={self.data.shape})"


class Tape:
    """Operation record of one forward pass."""

    __slots__ = ("ops",)

    def __init__(self) -> None:
        # (output, parents, backward_fn); backward_fn maps the output adjoint
        # to one adjoint (or None) per parent.
        self.ops: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def record(self, out: Tensor, parents: tuple[Tensor, ...], bw: Callable) -> None:
        self.ops.append((out, parents, bw))

    def __len__(self) -> int:
        return len(self.ops)


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into every parameter touched by the tape."""
    if loss.data.size != 1:
        raise NotScalar(f"loss has shape {loss.data.shape}")
    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for out, parents, bw in reversed(tape.ops):
        g = adjoint.pop(id(out), None)
        if g is None:
            continue
        for p, c in zip(parents, bw(g)):
            if c is None:
                continue
            if p.grad is not None:
                p.grad += c
            else:
                key = id(p)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + c
                else:
                    adjoint[key] = c


# ---------------------------------------------------------------------------
# Ops
# ---------------------------------------------------------------------------

def _out(tape: Tape | None, data, parents, bw) -> Tensor:
    t = Tensor(data)
    if tape is not None:
        tape.record(t, parents, bw)
    return t


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


def matmul(tape, a: Tensor, b: Tensor) -> Tensor:
    _need(a.data.ndim == 2 and b.data.ndim == 2, "matmul needs 2-D operands")
    _need(a.data.shape[1] == b.data.shape[0], f"matmul {a.shape} @ {b.shape}")
    out = a.data @ b.data
    return _out(tape, out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def affine(tape, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with b broadcast over rows."""
    _need(x.data.ndim == 2 and w.data.ndim == 2, "affine needs 2-D x, w")
    _need(x.data.shape[1] == w.data.shape[0], f"affine {x.shape} @ {w.shape}")
    _need(b.data.shape == (w.data.shape[1],), f"affine bias {b.shape}")
    out = x.data @ w.data + b.data
    return _out(
        tape, out, (x, w, b),
        lambda g: (g @ w.data.T, x.data.T @ g, g.sum(axis=0)),
    )


def add(tape, a: Tensor, b: Tensor) -> Tensor:
    _need(a.data.shape == b.data.shape, f"add {a.shape} vs {b.shape}")
    return _out(tape, a.data + b.data, (a, b), lambda g: (g, g))


def sub(tape, a: Tensor, b: Tensor) -> Tensor:
    _need(a.data.shape == b.data.shape, f"sub {a.shape} vs {b.shape}")
    return _out(tape, a.data - b.data, (a, b), lambda g: (g, -g))


def mul(tape, a: Tensor, b: Tensor) -> Tensor:
    _need(a.data.shape == b.data.shape, f"mul {a.shape} vs {b.shape}")
    return _out(tape, a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def add_row(tape, x: Tensor, r: Tensor) -> Tensor:
    """x + r with the single row r broadcast over the rows of x."""
    _need(x.data.ndim == 2 and r.data.shape == (1, x.data.shape[1]),
          f"add_row {x.shape} + {r.shape}")
    return _out(tape, x.data + r.data, (x, r),
                lambda g: (g, g.sum(axis=0, keepdims=True)))


def add_bias(tape, x: Tensor, b: Tensor) -> Tensor:
    """x + b with the 1-D vector b broadcast over the rows of x."""
    _need(x.data.ndim == 2 and b.data.shape == (x.data.shape[1],),
          f"add_bias {x.shape} + {b.shape}")
    return _out(tape, x.data + b.data, (x, b),
                lambda g: (g, g.sum(axis=0)))


def scale(tape, x: Tensor, c: float) -> Tensor:
    return _out(tape, x.data * c, (x,), lambda g: (g * c,))


def shift(tape, x: Tensor, c: float) -> Tensor:
    return _out(tape, x.data + c, (x,), lambda g: (g,))


def relu(tape, x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)
    mask = x.data > 0.0
    return _out(tape, out, (x,), lambda g: (g * mask,))


def sigmoid(tape, x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-np.clip(x.data, -500, 500)))
    return _out(tape, out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(tape, x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _out(tape, out, (x,), lambda g: (g * (1.0 - out * out),))


def exp(tape, x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _out(tape, out, (x,), lambda g: (g * out,))


def clamp(tape, x: Tensor, lo: float, hi: float) -> Tensor:
    out = np.clip(x.data, lo, hi)
    mask = (x.data >= lo) & (x.data <= hi)
    return _out(tape, out, (x,), lambda g: (g * mask,))


def softplus(tape, x: Tensor) -> Tensor:
    out = np.logaddexp(0.0, x.data)
    sig = 1.0 / (1.0 + np.exp(-np.clip(x.data, -500, 500)))
    return _out(tape, out, (x,), lambda g: (g * sig,))


def softmax(tape, x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by max subtraction."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((g - dot) * out,)

    return _out(tape, out, (x,), bw)


def logsumexp(tape, x: Tensor) -> Tensor:
    """log sum exp over all entries of x, returned as a scalar."""
    m = float(x.data.max())
    out = np.array(m + np.log(np.exp(x.data - m).sum()))
    soft = np.exp(x.data - out)
    return _out(tape, out, (x,), lambda g: (g * soft,))


def concat(tape, parts: Sequence[Tensor]) -> Tensor:
    """Concatenate row vectors (1, d_i) along the last axis."""
    _need(all(p.data.ndim == 2 and p.data.shape[0] == 1 for p in parts),
          "concat expects (1, d) rows")
    widths = [p.data.shape[1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)

    def bw(g):
        outs = []
        k = 0
        for w in widths:
            outs.append(g[:, k : k + w])
            k += w
        return tuple(outs)

    return _out(tape, out, tuple(parts), bw)


def vstack(tape, rows: Sequence[Tensor]) -> Tensor:
    """Stack row vectors (1, d) into a (k, d) matrix."""
    _need(all(r.data.ndim == 2 and r.data.shape[0] == 1 for r in rows),
          "vstack expects (1, d) rows")
    out = np.concatenate([r.data for r in rows], axis=0)

    def bw(g):
        return tuple(g[k : k + 1, :] for k in range(len(rows)))

    return _out(tape, out, tuple(rows), bw)


def sum_rows(tape, x: Tensor) -> Tensor:
    """(n, d) -> (1, d) summing over rows."""
    out = x.data.sum(axis=0, keepdims=True)
    n = x.data.shape[0]
    return _out(tape, out, (x,), lambda g: (np.repeat(g, n, axis=0),))


def mean_rows(tape, x: Tensor) -> Tensor:
    out = x.data.mean(axis=0, keepdims=True)
    n = x.data.shape[0]
    return _out(tape, out, (x,), lambda g: (np.repeat(g / n, n, axis=0),))


def sum_all(tape, x: Tensor) -> Tensor:
    out = np.array(x.data.sum())
    return _out(tape, out, (x,), lambda g: (np.full_like(x.data, float(g)),))


def dot(tape, a: Tensor, b: Tensor) -> Tensor:
    _need(a.data.shape == b.data.shape, f"dot {a.shape} vs {b.shape}")
    out = np.array(float((a.data * b.data).sum()))
    return _out(tape, out, (a, b), lambda g: (g * b.data, g * a.data))


def take(tape, x: Tensor, index: int) -> Tensor:
    """Pick one element of a row vector as a scalar."""
    flat = x.data.reshape(-1)
    out = np.array(flat[index])

    def bw(g):
        gx = np.zeros_like(x.data)
        gx.reshape(-1)[index] = float(g)
        return (gx,)

    return _out(tape, out, (x,), bw)


def gather_rows(tape, x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows of x by integer index (rows may repeat)."""
    idx = np.asarray(idx, dtype=np.int64)
    out = x.data[idx]

    def bw(g):
        gx = np.zeros_like(x.data)
        from .kernels import scatter_add_rows

        scatter_add_rows(gx, idx, g)
        return (gx,)

    return _out(tape, out, (x,), bw)


def row(tape, x: Tensor, index: int) -> Tensor:
    """One row of a matrix as a (1, d) tensor."""
    return gather_rows(tape, x, np.array([index], dtype=np.int64))


def segment_sum(tape, x: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows of x into buckets; bucket k receives rows with seg == k."""
    seg = np.asarray(seg, dtype=np.int64)
    _need(seg.shape[0] == x.data.shape[0], "segment ids must match row count")
    out = segment_sum_rows(x.data, seg, n_segments)
    return _out(tape, out, (x,), lambda g: (g[seg],))


def pack(tape, scalars: Sequence[Tensor]) -> Tensor:
    """Stack scalar tensors into a (1, k) row."""
    _need(all(s.data.size == 1 for s in scalars), "pack expects scalars")
    out = np.array([[float(s.data) for s in scalars]])

    def bw(g):
        return tuple(np.array(g[0, k]) for k in range(len(scalars)))

    return _out(tape, out, tuple(scalars), bw)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def constant(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64))


# ---------------------------------------------------------------------------
# Parameters and optimizers
# ---------------------------------------------------------------------------

class ParamStore:
    """Named parameter tensors with persistent gradient accumulators."""

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}
        self._adam_m: dict[str, np.ndarray] = {}
        self._adam_v: dict[str, np.ndarray] = {}
        self._adam_t = 0

    def add(self, name: str, shape: tuple[int, ...], rng: np.random.Generator,
            init: str = "uniform") -> Tensor:
        """Create a parameter; uniform +-1/sqrt(fan_in) or zeros."""
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        if init == "zeros":
            data = np.zeros(shape)
        elif init == "uniform":
            bound = 1.0 / np.sqrt(shape[0])
            data = rng.uniform(-bound, bound, size=shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        t = Tensor(data, param=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def zero_grad(self) -> None:
        for name in self.names():
            self._params[name].grad[:] = 0.0

    def scale_grad(self, c: float) -> None:
        for name in self.names():
            self._params[name].grad *= c

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {name: self._params[name].data.copy() for name in self.names()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if sorted(arrays) != self.names():
            raise KeyError("parameter names do not match the store")
        for name, arr in arrays.items():
            tgt = self._params[name]
            if tgt.data.shape != arr.shape:
                raise ShapeMismatch(
                    f"parameter {name}: {arr.shape} vs {tgt.data.shape}"
                )
            tgt.data[:] = arr


def sgd_step(store: ParamStore, learning_rate: float) -> None:
    """In-place SGD update; gradient buffers are zeroed afterwards."""
    for name in store.names():
        p = store[name]
        p.data -= learning_rate * p.grad
        p.grad[:] = 0.0


def adam_step(store: ParamStore, learning_rate: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update; gradient buffers are zeroed afterwards."""
    store._adam_t += 1
    t = store._adam_t
    for name in store.names():
        p = store[name]
        m = store._adam_m.setdefault(name, np.zeros_like(p.data))
        v = store._adam_v.setdefault(name, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * p.grad
        v *= beta2
        v += (1.0 - beta2) * p.grad * p.grad
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        p.grad[:] = 0.0
