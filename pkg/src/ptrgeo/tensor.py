"""Dense float64 tensors with a reverse-mode gradient tape.

Small by design: everything the LSTM/attention models need and nothing
more.  Tensors are immutable values; a Tape records the forward pass
(define-by-run) and is rebuilt for every training step.  Shapes are
limited to rank <= 2, and broadcasting is limited to row-vector
(1, k) and column-vector (m, 1) operands against an (m, k) matrix.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "Parameter",
    "DimensionError",
    "ContractError",
    "NonFiniteError",
    "TrainingError",
    "matmul",
    "add",
    "sub",
    "mul",
    "tanh",
    "sigmoid",
    "pointwise",
    "stable_softmax",
    "cross_entropy_rows",
    "concat_rows",
    "concat_cols",
    "slice_rows",
    "slice_cols",
    "repeat_rows",
    "gather_rows",
    "reshape",
    "transpose",
    "sum_all",
    "scale",
    "backward",
    "sgd_step",
]


class DimensionError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class ContractError(ValueError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


class NonFiniteError(ValueError):
    """A NaN or infinity appeared in tensor data."""


class TrainingError(RuntimeError):
    """Parameter update failed; the message names the offending parameter."""


class Tape:
    """Append-only record of one forward pass.

    Node k's parents always have ids < k, so a single reverse sweep over
    node ids is a valid topological order for backpropagation.
    """

    __slots__ = ("_parents", "_backwards", "_param_nodes")

    def __init__(self):
        self._parents: list[tuple[int, ...]] = []
        self._backwards: list[Callable | None] = []
        self._param_nodes: list[tuple[int, "Parameter"]] = []

    def __len__(self) -> int:
        return len(self._parents)

    def _add(self, parents: tuple[int, ...], backward_fn: Callable | None) -> int:
        self._parents.append(parents)
        self._backwards.append(backward_fn)
        return len(self._parents) - 1

    def backward(self, loss: "Tensor", params: Iterable["Parameter"]):
        return backward(self, loss, params)


class Tensor:
    """Immutable dense array of float64 values, optionally bound to a tape."""

    __slots__ = ("data", "tape", "node")

    def __init__(self, data, tape: Tape | None = None, node: int | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise DimensionError(f"rank {arr.ndim} > 2 unsupported (shape {arr.shape})")
        if node is None and not np.all(np.isfinite(arr)):
            raise NonFiniteError("non-finite value in tensor literal")
        self.data = arr
        self.tape = tape
        self.node = node

    @classmethod
    def _const(cls, arr: np.ndarray) -> "Tensor":
        t = object.__new__(cls)
        t.data = arr
        t.tape = None
        t.node = None
        return t

    @classmethod
    def _tracked(cls, arr: np.ndarray, tape: Tape, node: int) -> "Tensor":
        t = object.__new__(cls)
        t.data = arr
        t.tape = tape
        t.node = node
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = "" if self.tape is None else f" node={self.node}"
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter:
    """A named, persistent, learnable tensor.

    The name is a stable path like ``"encoder.w_ih"`` and must be unique
    within a model; the shape is fixed at creation.  ``bind`` attaches the
    current value to a tape as a leaf so gradients can be collected.
    """

    __slots__ = ("name", "value")

    def __init__(self, name: str, value):
        arr = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite initial value for parameter {name!r}")
        self.name = name
        self.value = arr

    def assign(self, value: np.ndarray):
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != self.value.shape:
            raise DimensionError(
                f"parameter {self.name!r} shape is immutable: "
                f"{self.value.shape} != {arr.shape}"
            )
        self.value = arr

    def bind(self, tape: Tape | None) -> Tensor:
        if tape is None:
            return Tensor._const(self.value)
        node = tape._add((), None)
        tape._param_nodes.append((node, self))
        return Tensor._tracked(self.value, tape, node)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


# ---------------------------------------------------------------------------
# op plumbing


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr: np.ndarray, op: str):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite value produced by {op}")


def _result(arr: np.ndarray, op: str, pairs) -> Tensor:
    """Wrap an op result, recording backward rules for taped inputs.

    ``pairs`` is a sequence of (input tensor, grad_fn) where grad_fn maps
    the output gradient to that input's gradient contribution.
    """
    _check_finite(arr, op)
    tape = None
    for t, _ in pairs:
        if t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ContractError(f"{op}: operands belong to different tapes")
    if tape is None:
        return Tensor._const(arr)
    tracked = [(t.node, fn) for t, fn in pairs if t.tape is not None]
    parents = tuple(n for n, _ in tracked)
    fns = tuple(fn for _, fn in tracked)
    def backward_fn(g):
        return tuple(fn(g) for fn in fns)
    node = tape._add(parents, backward_fn)
    return Tensor._tracked(arr, tape, node)


def _broadcast_ok(sa: tuple, sb: tuple) -> bool:
    if sa == sb:
        return True
    if len(sa) == 2 and len(sb) == 2:
        m, k = sa
        bm, bk = sb
        # row vector against matrix or column vector against matrix
        if (bm == 1 and bk == k) or (bm == m and bk == 1):
            return True
        if (m == 1 and k == bk) or (m == bm and k == 1):
            return True
    return False


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    out = g
    for axis, dim in enumerate(shape):
        if dim == 1 and out.shape[axis] != 1:
            out = out.sum(axis=axis, keepdims=True)
    return out


# ---------------------------------------------------------------------------
# arithmetic ops


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data
    return _result(out, "matmul", [
        (a, lambda g: g @ bd.T),
        (b, lambda g: ad.T @ g),
    ])


def _binary(op: str, a, b, fwd, da, db) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise DimensionError(f"{op}: incompatible shapes {a.shape} vs {b.shape}")
    out = fwd(a.data, b.data)
    ash, bsh = a.shape, b.shape
    return _result(out, op, [
        (a, lambda g: _unbroadcast(da(g, a.data, b.data), ash)),
        (b, lambda g: _unbroadcast(db(g, a.data, b.data), bsh)),
    ])


def add(a, b) -> Tensor:
    return _binary("add", a, b, np.add,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary("sub", a, b, np.subtract,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary("mul", a, b, np.multiply,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)
    return _result(y, "tanh", [(x, lambda g: g * (1.0 - y * y))])


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    # tanh formulation avoids overflow in exp for large |x|
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return _result(y, "sigmoid", [(x, lambda g: g * y * (1.0 - y))])


_POINTWISE = {"tanh": tanh, "sigmoid": sigmoid, "add": add, "mul": mul, "sub": sub}


def pointwise(op: str, *args) -> Tensor:
    """Dispatch an elementwise op by name: tanh, sigmoid, add, mul, sub."""
    try:
        fn = _POINTWISE[op]
    except KeyError:
        raise ValueError(f"unknown pointwise op {op!r}") from None
    return fn(*args)


def stable_softmax(x) -> Tensor:
    """Softmax over the last axis, computed after subtracting the row max."""
    x = _as_tensor(x)
    if x.size < 1:
        raise DimensionError("stable_softmax: empty input")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    def bwd(g):
        return (g - (g * y).sum(axis=-1, keepdims=True)) * y
    return _result(y, "stable_softmax", [(x, bwd)])


def cross_entropy_rows(logits, targets, weights=None) -> Tensor:
    """Weighted sum of per-row negative log-likelihoods.

    ``logits`` is (B, K); ``targets`` holds one class index per row;
    ``weights`` (optional, default all ones) scales each row's loss, with
    zero weight excluding a row from both loss and gradient.  Log-softmax
    uses max subtraction, matching stable_softmax.
    """
    logits = _as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy_rows: logits must be 2-D, got {logits.shape}")
    t = np.asarray(targets, dtype=np.intp)
    nrows, ncls = logits.shape
    if t.shape != (nrows,):
        raise DimensionError(f"cross_entropy_rows: {t.shape} targets for {nrows} rows")
    if t.size and (t.min() < 0 or t.max() >= ncls):
        raise ContractError(f"cross_entropy_rows: target index outside [0, {ncls - 1}]")
    w = np.ones(nrows) if weights is None else np.asarray(weights, dtype=np.float64)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(nrows)
    out = np.asarray((w * (lse - z[rows, t])).sum())
    def bwd(g):
        p = np.exp(z - lse[:, None])
        p[rows, t] -= 1.0
        return (float(g)) * w[:, None] * p
    return _result(out, "cross_entropy_rows", [(logits, bwd)])


# ---------------------------------------------------------------------------
# structural ops


def concat_rows(parts: Sequence) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat_rows: no operands")
    cols = {p.shape[1] for p in parts if p.ndim == 2}
    if any(p.ndim != 2 for p in parts) or len(cols) != 1:
        raise DimensionError(f"concat_rows: shapes {[p.shape for p in parts]}")
    out = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])
    pairs = []
    for i, p in enumerate(parts):
        a, b = offsets[i], offsets[i + 1]
        pairs.append((p, lambda g, a=a, b=b: g[a:b]))
    return _result(out, "concat_rows", pairs)


def concat_cols(parts: Sequence) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat_cols: no operands")
    rows = {p.shape[0] for p in parts if p.ndim == 2}
    if any(p.ndim != 2 for p in parts) or len(rows) != 1:
        raise DimensionError(f"concat_cols: shapes {[p.shape for p in parts]}")
    out = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])
    pairs = []
    for i, p in enumerate(parts):
        a, b = offsets[i], offsets[i + 1]
        pairs.append((p, lambda g, a=a, b=b: g[:, a:b]))
    return _result(out, "concat_cols", pairs)


def slice_rows(x, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    if x.ndim != 2 or not (0 <= start <= stop <= x.shape[0]):
        raise DimensionError(f"slice_rows: [{start}:{stop}] of {x.shape}")
    out = x.data[start:stop].copy()
    shp = x.shape
    def bwd(g):
        dz = np.zeros(shp)
        dz[start:stop] = g
        return dz
    return _result(out, "slice_rows", [(x, bwd)])


def slice_cols(x, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    if x.ndim != 2 or not (0 <= start <= stop <= x.shape[1]):
        raise DimensionError(f"slice_cols: [{start}:{stop}] of {x.shape}")
    out = x.data[:, start:stop].copy()
    shp = x.shape
    def bwd(g):
        dz = np.zeros(shp)
        dz[:, start:stop] = g
        return dz
    return _result(out, "slice_cols", [(x, bwd)])


def repeat_rows(x, k: int) -> Tensor:
    """Stack k copies of a matrix vertically."""
    x = _as_tensor(x)
    if x.ndim != 2 or k < 1:
        raise DimensionError(f"repeat_rows: shape {x.shape}, k={k}")
    out = np.tile(x.data, (k, 1))
    r, c = x.shape
    return _result(out, "repeat_rows",
                   [(x, lambda g: g.reshape(k, r, c).sum(axis=0))])


def gather_rows(x, indices) -> Tensor:
    """Select rows by index; duplicate indices accumulate gradient."""
    x = _as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    if x.ndim != 2 or idx.ndim != 1:
        raise DimensionError(f"gather_rows: shape {x.shape}, indices {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ContractError(f"gather_rows: index outside [0, {x.shape[0] - 1}]")
    out = x.data[idx]
    shp = x.shape
    def bwd(g):
        dz = np.zeros(shp)
        np.add.at(dz, idx, g)
        return dz
    return _result(out, "gather_rows", [(x, bwd)])


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    out = x.data.reshape(shape)
    old = x.data.shape
    return _result(out.copy(), "reshape", [(x, lambda g: g.reshape(old))])


def transpose(x) -> Tensor:
    x = _as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"transpose: shape {x.shape}")
    return _result(x.data.T.copy(), "transpose", [(x, lambda g: g.T)])


def sum_all(x) -> Tensor:
    x = _as_tensor(x)
    out = np.asarray(x.data.sum())
    shp = x.data.shape
    return _result(out, "sum_all", [(x, lambda g: np.full(shp, float(g)))])


def scale(x, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    return _result(x.data * c, "scale", [(x, lambda g: g * c)])


# ---------------------------------------------------------------------------
# backward pass and parameter update


def backward(tape: Tape, loss: Tensor, params: Iterable[Parameter]) -> dict[str, np.ndarray]:
    """Gradient of a scalar loss w.r.t. every parameter, by name.

    Visits tape nodes in strictly decreasing id order exactly once.
    Parameters that never touched the loss get zero gradients.
    """
    if loss.tape is not tape or loss.node is None:
        raise ContractError("loss is not a node on this tape")
    if loss.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    grads: list[np.ndarray | None] = [None] * len(tape)
    grads[loss.node] = np.ones_like(loss.data)
    parents_list = tape._parents
    backward_list = tape._backwards
    param_node_ids = {node for node, _ in tape._param_nodes}
    for nid in range(loss.node, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        fn = backward_list[nid]
        if fn is not None:
            for pid, pg in zip(parents_list[nid], fn(g)):
                if grads[pid] is None:
                    grads[pid] = np.array(pg)  # own the buffer; pg may alias g
                else:
                    grads[pid] += pg
        if nid not in param_node_ids:
            grads[nid] = None  # free as we go
    out: dict[str, np.ndarray] = {}
    for p in params:
        out.setdefault(p.name, np.zeros_like(p.value))
    for node, p in tape._param_nodes:
        g = grads[node]
        if g is not None:
            if p.name in out:
                out[p.name] = out[p.name] + g
            else:
                out[p.name] = np.array(g)
    return out


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.dot(g.ravel(), g.ravel()))
    return float(np.sqrt(total))


def sgd_step(params: Iterable[Parameter], grads: Mapping[str, np.ndarray],
             lr: float, clip_norm: float) -> float:
    """One SGD update with joint L2-norm clipping across all parameters.

    Returns the pre-clip global gradient norm.  Raises TrainingError on a
    non-finite gradient, naming the offending parameter.
    """
    if lr <= 0 or clip_norm <= 0:
        raise ContractError("lr and clip_norm must be positive")
    params = list(params)
    for p in params:
        g = grads[p.name]
        if g.shape != p.value.shape:
            raise DimensionError(
                f"gradient shape {g.shape} != parameter {p.name!r} shape {p.value.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {p.name!r}")
    norm = global_norm({p.name: grads[p.name] for p in params})
    factor = clip_norm / norm if norm > clip_norm else 1.0
    for p in params:
        p.value = p.value - (lr * factor) * grads[p.name]
    return norm
