"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Tensors wrap numpy arrays; a Tape records primitive applications in forward
order, so walking the record list backwards is a reverse topological
traversal. Gradients accumulate additively. Everything is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

Array = np.ndarray


class ShapeMismatch(ValueError):
    """Operand shapes incompatible for a primitive (programming error)."""


class Tensor:
    """A float64 array, optionally tracked on a tape."""

    __slots__ = ("value", "tape", "grad", "name")

    def __init__(self, value, tape: "Tape | None" = None, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.grad: Array | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.value.shape}{tag}, tracked={self.tape is not None})"


class Tape:
    """Ordered record of primitive applications with their backward rules."""

    def __init__(self):
        # each record: (output tensor, parent tensors, backward fn)
        # backward fn maps the output gradient to one gradient per parent
        # (None for untracked parents).
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._leaves: list[Tensor] = []
        self._consumed = False

    def leaf(self, value, name: str | None = None) -> Tensor:
        """Register a differentiable input; its .grad is set by backward()."""
        t = Tensor(value, tape=self, name=name)
        self._leaves.append(t)
        return t

    def record(self, out_value: Array, parents: tuple[Tensor, ...], backward: Callable) -> Tensor:
        out = Tensor(out_value, tape=self)
        self._records.append((out, parents, backward))
        return out

    def backward(self, root: Tensor) -> None:
        """Accumulate gradients of the scalar `root` into every leaf's .grad."""
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward()")
        if root.tape is not self:
            raise ValueError("root tensor does not belong to this tape")
        if root.value.size != 1:
            raise ValueError(f"backward root must be scalar, got shape {root.value.shape}")
        self._consumed = True

        grads: dict[int, Array] = {id(root): np.ones_like(root.value)}
        for out, parents, backward in reversed(self._records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for parent, pg in zip(parents, backward(g)):
                if pg is None or parent.tape is None:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg
        for leaf in self._leaves:
            g = grads.get(id(leaf))
            leaf.grad = np.zeros_like(leaf.value) if g is None else g


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(*tensors: Tensor) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise ValueError("operands tracked on different tapes")
    return tape


def _apply(parents: Iterable, out_value: Array, backward: Callable) -> Tensor:
    parents = tuple(_wrap(p) for p in parents)
    tape = _tape_of(*parents)
    if tape is None:
        return Tensor(out_value)
    return tape.record(out_value, parents, backward)


def _check_binary_shapes(op: str, a: Array, b: Array) -> None:
    # allowed: identical shapes, a scalar on either side, or a (k,) row
    # against an (N, k) matrix -- nothing broader, by design.
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return
    if b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        return
    raise ShapeMismatch(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    # (N, k) gradient flowing into a (k,) operand
    return g.sum(axis=0)


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_binary_shapes("add", a.value, b.value)
    out = a.value + b.value
    return _apply((a, b), out, lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_binary_shapes("sub", a.value, b.value)
    out = a.value - b.value
    return _apply((a, b), out, lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_binary_shapes("mul", a.value, b.value)
    out = a.value * b.value
    return _apply(
        (a, b),
        out,
        lambda g: (_unbroadcast(g * b.value, a.value.shape), _unbroadcast(g * a.value, b.value.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2):
        raise ShapeMismatch(f"matmul: only 1-D/2-D operands, got {av.shape} @ {bv.shape}")
    if av.shape[-1] != (bv.shape[0] if bv.ndim >= 1 else 0):
        raise ShapeMismatch(f"matmul: inner dims differ, {av.shape} @ {bv.shape}")
    out = av @ bv

    def backward(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 1 and bv.ndim == 2:
            return g @ bv.T, np.outer(av, g)
        if av.ndim == 2 and bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        return g * bv, g * av  # 1-D dot

    return _apply((a, b), out, backward)


def relu(x) -> Tensor:
    x = _wrap(x)
    mask = x.value > 0.0
    return _apply((x,), np.where(mask, x.value, 0.0), lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = _wrap(x)
    xv = x.value
    # stable on both tails
    s = np.where(xv >= 0, 1.0 / (1.0 + np.exp(-np.abs(xv))), np.exp(-np.abs(xv)) / (1.0 + np.exp(-np.abs(xv))))
    return _apply((x,), s, lambda g: (g * s * (1.0 - s),))


def softplus(x) -> Tensor:
    """log(1 + e^x), evaluated stably; backward is sigmoid(x)."""
    x = _wrap(x)
    xv = x.value
    out = np.maximum(xv, 0.0) + np.log1p(np.exp(-np.abs(xv)))
    sig = np.where(xv >= 0, 1.0 / (1.0 + np.exp(-np.abs(xv))), np.exp(-np.abs(xv)) / (1.0 + np.exp(-np.abs(xv))))
    return _apply((x,), out, lambda g: (g * sig,))


def absval(x) -> Tensor:
    x = _wrap(x)
    return _apply((x,), np.abs(x.value), lambda g: (g * np.sign(x.value),))


def sqrt(x) -> Tensor:
    x = _wrap(x)
    r = np.sqrt(x.value)
    return _apply((x,), r, lambda g: (g * 0.5 / r,))


def log(x) -> Tensor:
    x = _wrap(x)
    return _apply((x,), np.log(x.value), lambda g: (g / x.value,))


def clamp(x, lo: float, hi: float) -> Tensor:
    x = _wrap(x)
    inside = (x.value >= lo) & (x.value <= hi)  # zero gradient outside [lo, hi]
    return _apply((x,), np.clip(x.value, lo, hi), lambda g: (g * inside,))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    values = [t.value for t in tensors]
    out = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _apply(tensors, out, backward)


def narrow(x, start: int, stop: int, axis: int = 0) -> Tensor:
    """Contiguous slice [start:stop) along one axis."""
    x = _wrap(x)
    index = [slice(None)] * x.value.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        gx = np.zeros_like(x.value)
        gx[index] = g
        return (gx,)

    return _apply((x,), x.value[index].copy(), backward)


def gather(x, indices) -> Tensor:
    """Select along axis 0 by an integer index array; backward scatter-adds."""
    x = _wrap(x)
    idx = np.asarray(indices)
    out = np.take(x.value, idx, axis=0)

    def backward(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, idx, g)
        return (gx,)

    return _apply((x,), out, backward)


def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    old = x.value.shape
    return _apply((x,), x.value.reshape(shape), lambda g: (g.reshape(old),))


def tsum(x, axis: int | None = None) -> Tensor:
    x = _wrap(x)
    out = np.asarray(x.value.sum(axis=axis))

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.value.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.value.shape).copy(),)

    return _apply((x,), out, backward)


def tmean(x, axis: int | None = None) -> Tensor:
    x = _wrap(x)
    count = x.value.size if axis is None else x.value.shape[axis]
    out = np.asarray(x.value.mean(axis=axis))

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g / count, x.value.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis) / count, x.value.shape).copy(),)

    return _apply((x,), out, backward)


def affine(x, weight, bias) -> Tensor:
    """x @ W + b; the workhorse layer of the policy network."""
    return add(matmul(x, weight), bias)


def custom_op(parents, out_value: Array, backward: Callable) -> Tensor:
    """Record an externally defined primitive (e.g. cost-map sampling)."""
    return _apply(tuple(parents), np.asarray(out_value, dtype=np.float64), backward)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    """Adam state; `plain=True` disables moments for exact gradient descent."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    plain: bool = False
    step_count: int = 0
    m: dict[str, Array] = field(default_factory=dict)
    v: dict[str, Array] = field(default_factory=dict)


def step(params: Mapping[str, Array], grads: Mapping[str, Array], state: OptimizerState) -> Mapping[str, Array]:
    """Update parameters in place from gradients; returns `params`."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.step_count += 1
    for name, g in grads.items():
        p = params[name]
        if state.plain:
            p -= state.learning_rate * g
            continue
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**state.step_count)
        v_hat = v / (1.0 - state.beta2**state.step_count)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# ---------------------------------------------------------------------------
# checkpoint format: one JSON header line, then concatenated little-endian
# float64 blocks. Round-trips bit-exactly.

CHECKPOINT_VERSION = 1


def save_arrays(path, arrays: Mapping[str, Array], extra: dict | None = None) -> None:
    names = list(arrays.keys())
    blocks = []
    offsets = []
    cursor = 0
    for name in names:
        block = np.ascontiguousarray(arrays[name], dtype="<f8").tobytes()
        offsets.append(cursor)
        cursor += len(block)
        blocks.append(block)
    header = {
        "version": CHECKPOINT_VERSION,
        "names": names,
        "shapes": [list(arrays[n].shape) for n in names],
        "dtype": "<f8",
        "offsets": offsets,
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for block in blocks:
            fh.write(block)


def load_arrays(path) -> tuple[dict[str, Array], dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        blob = fh.read()
    if header["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header['version']}")
    arrays = {}
    for name, shape, offset in zip(header["names"], header["shapes"], header["offsets"]):
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        arrays[name] = arr.reshape(shape).astype(np.float64)
    return arrays, header.get("extra", {})
