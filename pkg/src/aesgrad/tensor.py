"""Dense tensors with tape-based reverse-mode differentiation.

The primitive set covers exactly what the miniature text encoder needs.
Ops executed while a ComputationRecord is active are appended to it in
execution order (so the record is topologically sorted by construction);
``backward`` replays the record once in reverse. Ops executed with no
active record are plain forward computations.

Default precision is 32-bit. Finite-difference checks are meaningless
there, so a global 64-bit mode is switchable via ``precision``.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    ContractError,
    DegenerateVectorError,
    DeterminismError,
    ShapeMismatchError,
)

LAYER_NORM_EPS = 1e-5
# l2_normalize refuses vectors shorter than this.
NORMALIZE_TOLERANCE = 1e-12

_GELU_C = float(np.sqrt(2.0 / np.pi))

_tensor_ids = itertools.count()


class _State(threading.local):
    def __init__(self) -> None:
        self.record: ComputationRecord | None = None
        self.dtype = np.float32


_state = _State()


def default_dtype() -> np.dtype:
    return np.dtype(_state.dtype)


def set_default_dtype(dtype: str | np.dtype) -> None:
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"unsupported dtype {dt}; use float32 or float64")
    _state.dtype = dt.type


@contextmanager
def precision(dtype: str | np.dtype):
    """Temporarily switch the default dtype ('float32' or 'float64')."""
    previous = _state.dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = previous


class Tensor:
    """A dense numeric array plus autodiff bookkeeping.

    ``requires_grad`` marks leaf parameters; gradients for them are
    collected into a GradientMap by ``backward``.
    """

    __slots__ = ("data", "requires_grad", "tid")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else default_dtype())
        self.requires_grad = bool(requires_grad)
        self.tid = next(_tensor_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad, dtype=self.data.dtype)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{grad})"


@dataclass
class _RecordedOp:
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    # maps the output gradient to one gradient per input (None = no flow)
    backward: Callable[[np.ndarray], tuple]


@dataclass
class ComputationRecord:
    """Ordered tape of recorded primitive ops."""

    ops: list[_RecordedOp] = field(default_factory=list)

    def append(self, op: _RecordedOp) -> None:
        self.ops.append(op)

    def output_ids(self) -> set[int]:
        return {op.output.tid for op in self.ops}

    def parameters(self) -> list[Tensor]:
        """Leaf tensors with requires_grad that feed this record."""
        produced = self.output_ids()
        seen: dict[int, Tensor] = {}
        for op in self.ops:
            for t in op.inputs:
                if t.requires_grad and t.tid not in produced and t.tid not in seen:
                    seen[t.tid] = t
        return list(seen.values())


@contextmanager
def recording():
    """Open a fresh record; ops inside the block are appended to it."""
    if _state.record is not None:
        raise ContractError("nested recording is not supported")
    record = ComputationRecord()
    _state.record = record
    try:
        yield record
    finally:
        _state.record = None


@contextmanager
def no_recording():
    """Suspend the active record, if any, for the duration of the block."""
    previous = _state.record
    _state.record = None
    try:
        yield
    finally:
        _state.record = previous


def _emit(kind: str, inputs: tuple[Tensor, ...], out_data: np.ndarray,
          backward: Callable[[np.ndarray], tuple]) -> Tensor:
    out = Tensor(out_data, dtype=out_data.dtype)
    record = _state.record
    if record is not None:
        record.append(_RecordedOp(kind, inputs, out, backward))
    return out


class GradientMap:
    """Gradients of a scalar objective keyed by parameter tensor id."""

    def __init__(self, grads: dict[int, Tensor]):
        self._grads = grads

    def wrt(self, param: Tensor) -> Tensor | None:
        return self._grads.get(param.tid)

    def __contains__(self, param: Tensor) -> bool:
        return param.tid in self._grads

    def __len__(self) -> int:
        return len(self._grads)

    def tensors(self) -> dict[int, Tensor]:
        return dict(self._grads)

    def l2_norm(self, params: Iterable[Tensor]) -> float:
        total = 0.0
        for p in params:
            g = self.wrt(p)
            if g is not None:
                total += float(np.sum(np.asarray(g.data, dtype=np.float64) ** 2))
        return float(np.sqrt(total))


def backward(record: ComputationRecord, objective: Tensor) -> GradientMap:
    """Reverse-mode gradients of a recorded scalar objective.

    Every requires_grad leaf that feeds the record gets an entry; leaves
    the objective does not reach get all-zero entries.
    """
    if objective.data.shape != ():
        raise ContractError(
            f"objective must be a scalar, got shape {objective.data.shape}")
    if objective.tid not in record.output_ids():
        raise ContractError("objective was not produced by this record")

    grads: dict[int, np.ndarray] = {objective.tid: np.ones((), dtype=objective.data.dtype)}
    for op in reversed(record.ops):
        gout = grads.get(op.output.tid)
        if gout is None:
            continue
        for tensor, gin in zip(op.inputs, op.backward(gout)):
            if gin is None:
                continue
            acc = grads.get(tensor.tid)
            if acc is None:
                grads[tensor.tid] = np.array(gin, dtype=tensor.data.dtype, copy=True)
            else:
                acc += gin

    result: dict[int, Tensor] = {}
    for param in record.parameters():
        g = grads.get(param.tid)
        if g is None:
            g = np.zeros_like(param.data)
        result[param.tid] = Tensor(g, dtype=param.data.dtype)
    return GradientMap(result)


# --- primitives -----------------------------------------------------------

def _require_2d(name: str, *tensors: Tensor) -> None:
    for t in tensors:
        if t.data.ndim != 2:
            raise ShapeMismatchError(f"{name} expects 2-D operands, got shape {t.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; also accepts a 1-D vector on either side."""
    if a.data.ndim == 1 and b.data.ndim == 2:
        if a.shape[0] != b.shape[0]:
            raise ShapeMismatchError(f"matmul: inner dimensions disagree for {a.shape} x {b.shape}")
        out = a.data @ b.data

        def back(g):
            return b.data @ g, np.outer(a.data, g)
    elif a.data.ndim == 2 and b.data.ndim == 1:
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatchError(f"matmul: inner dimensions disagree for {a.shape} x {b.shape}")
        out = a.data @ b.data

        def back(g):
            return np.outer(g, b.data), a.data.T @ g
    elif a.data.ndim == 2 and b.data.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatchError(f"matmul: inner dimensions disagree for {a.shape} x {b.shape}")
        out = a.data @ b.data

        def back(g):
            return g @ b.data.T, a.data.T @ g
    else:
        raise ShapeMismatchError(f"matmul: unsupported ranks for {a.shape} x {b.shape}")
    return _emit("matmul", (a, b), out, back)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; b may be a row vector broadcast over a's rows."""
    if a.shape == b.shape:
        def back(g):
            return g, g
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        def back(g):
            return g, g.sum(axis=0)
    else:
        raise ShapeMismatchError(f"add: incompatible shapes {a.shape} and {b.shape}")
    return _emit("add", (a, b), a.data + b.data, back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; b may be a row vector broadcast over a's rows."""
    if a.shape == b.shape:
        def back(g):
            return g * b.data, g * a.data
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        def back(g):
            return g * b.data, (g * a.data).sum(axis=0)
    else:
        raise ShapeMismatchError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    return _emit("mul", (a, b), a.data * b.data, back)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def back(g):
        return (g * s,)

    return _emit("scale", (a,), a.data * a.data.dtype.type(s), back)


def layer_norm(x: Tensor) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (eps 1e-5)."""
    mean_ = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + x.data.dtype.type(LAYER_NORM_EPS))
    y = (x.data - mean_) * inv_std

    def back(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return ((g - gm - y * gym) * inv_std,)

    return _emit("layer_norm", (x,), y.astype(x.data.dtype, copy=False), back)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit("softmax", (x,), y, back)


def gelu(x: Tensor) -> Tensor:
    """GELU in the tanh-approximation form."""
    x3 = x.data ** 3
    inner = _GELU_C * (x.data + 0.044715 * x3)
    t = np.tanh(inner)
    y = 0.5 * x.data * (1.0 + t)

    def back(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x.data ** 2)
        dy = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * d_inner
        return (g * dy,)

    return _emit("gelu", (x,), y.astype(x.data.dtype, copy=False), back)


def embedding_lookup(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of a matrix; repeated rows accumulate gradient."""
    _require_2d("embedding_lookup", table)
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeMismatchError(f"embedding_lookup: ids must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ContractError(
            f"embedding_lookup: id out of range for table with {table.shape[0]} rows")

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _emit("embedding_lookup", (table,), table.data[idx], back)


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1 or a.shape != b.shape:
        raise ShapeMismatchError(f"dot: expects equal-length vectors, got {a.shape} and {b.shape}")

    def back(g):
        return g * b.data, g * a.data

    return _emit("dot", (a, b), np.dot(a.data, b.data), back)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        n = x.data.size

        def back(g):
            return (np.full_like(x.data, g / n),)

        return _emit("mean", (x,), x.data.mean(), back)
    if axis == 0:
        n = x.data.shape[0]

        def back(g):
            return (np.broadcast_to(g / n, x.data.shape).astype(x.data.dtype, copy=True),)

        return _emit("mean", (x,), x.data.mean(axis=0), back)
    raise ShapeMismatchError(f"mean: unsupported axis {axis}")


def l2_normalize(x: Tensor) -> Tensor:
    if x.data.ndim != 1:
        raise ShapeMismatchError(f"l2_normalize: expects a vector, got shape {x.shape}")
    norm = float(np.linalg.norm(np.asarray(x.data, dtype=np.float64)))
    if norm < NORMALIZE_TOLERANCE:
        raise DegenerateVectorError(
            f"cannot normalize vector with norm {norm:.3e} (< {NORMALIZE_TOLERANCE:.0e})")
    inv = x.data.dtype.type(1.0 / norm)
    y = x.data * inv

    def back(g):
        return ((g - y * np.dot(y, g)) * inv,)

    return _emit("l2_normalize", (x,), y, back)


def transpose(x: Tensor) -> Tensor:
    _require_2d("transpose", x)

    def back(g):
        return (g.T,)

    return _emit("transpose", (x,), x.data.T.copy(), back)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape)) != x.data.size:
        raise ShapeMismatchError(f"reshape: cannot view {x.shape} as {shape}")
    original = x.data.shape

    def back(g):
        return (g.reshape(original),)

    return _emit("reshape", (x,), x.data.reshape(shape).copy(), back)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    _require_2d("slice_cols", x)
    if not (0 <= start < stop <= x.shape[1]):
        raise ShapeMismatchError(
            f"slice_cols: [{start}:{stop}] out of bounds for shape {x.shape}")

    def back(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return _emit("slice_cols", (x,), x.data[:, start:stop].copy(), back)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeMismatchError("concat_cols: empty part list")
    _require_2d("concat_cols", *parts)
    rows = parts[0].shape[0]
    for p in parts:
        if p.shape[0] != rows:
            raise ShapeMismatchError(
                f"concat_cols: row counts differ ({rows} vs {p.shape[0]})")
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def back(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _emit("concat_cols", tuple(parts), np.concatenate([p.data for p in parts], axis=1), back)


# --- gradient checking ----------------------------------------------------

def grad_check(forward_fn: Callable[[], Tensor], params: Sequence[Tensor],
               step_h: float, sample_size: int = 200, seed: int = 0) -> float:
    """Compare recorded gradients against central finite differences.

    Samples min(total, sample_size) coordinates, spread so every parameter
    is probed, and returns the worst relative error with denominator
    max(|analytic|, |numeric|, 1e-8). forward_fn must be deterministic; it
    is evaluated twice up front to verify that.
    """
    if step_h <= 0:
        raise ContractError(f"step_h must be positive, got {step_h}")
    if not params:
        raise ContractError("grad_check needs at least one parameter")

    first = np.array(forward_fn().data, copy=True)
    second = np.array(forward_fn().data, copy=True)
    if not np.array_equal(first, second):
        raise DeterminismError("forward_fn returned different values on repeated evaluation")

    with recording() as record:
        objective = forward_fn()
    grads = backward(record, objective)

    sizes = [p.size for p in params]
    total = sum(sizes)
    budget = min(total, sample_size)
    rng = np.random.default_rng(seed)

    # proportional allocation with at least one coordinate per parameter
    counts = [max(1, round(budget * s / total)) for s in sizes]
    counts = [min(c, s) for c, s in zip(counts, sizes)]
    while sum(counts) < budget:
        spare = [s - c for c, s in zip(counts, sizes)]
        i = int(np.argmax(spare))
        if spare[i] == 0:
            break
        counts[i] += 1

    worst = 0.0
    for param, count in zip(params, counts):
        g = grads.wrt(param)
        analytic = np.zeros(param.size) if g is None else np.asarray(g.data, dtype=np.float64).ravel()
        coords = np.arange(param.size) if count >= param.size else rng.choice(param.size, size=count, replace=False)
        flat = param.data.reshape(-1)
        for i in coords:
            original = flat[i]
            flat[i] = original + step_h
            f_plus = float(forward_fn().data)
            flat[i] = original - step_h
            f_minus = float(forward_fn().data)
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * step_h)
            denom = max(abs(analytic[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
