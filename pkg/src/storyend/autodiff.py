"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Operations applied while a :class:`Tape` is active are recorded whenever at
least one input requires a gradient.  :func:`backward` replays the tape in
reverse and accumulates gradients into the leaves.

    >>> with Tape() as tape:
    ...     x = Tensor([1.0, 2.0], requires_grad=True)
    ...     loss = sum_(tanh(x))
    >>> grads = backward(tape, loss)
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Input shapes do not conform to a primitive's shape rule."""


class NumericError(ArithmeticError):
    """A primitive produced NaN or Inf."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if dtype is None and isinstance(data, (np.ndarray, np.generic)) and data.dtype.kind == "f":
            arr = data if type(data) is np.ndarray else np.asarray(data)
        else:
            arr = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


@dataclass
class Record:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    saved: object
    attrs: dict


@dataclass
class Tape:
    """Ordered record of primitive applications.

    Use as a context manager; nested tapes are allowed and only the innermost
    one records.
    """

    records: list[Record] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.records)


_local = threading.local()


def _stack() -> list[Tape]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Tape | None:
    tapes = _stack()
    return tapes[-1] if tapes else None


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# Each primitive: forward(arrays, attrs) -> (out, saved); backward(g, arrays, out, saved, attrs) -> grads.
_PRIMITIVES: dict[str, tuple[Callable, Callable]] = {}


def primitive(name: str):
    def register(fwd):
        def with_backward(bwd):
            _PRIMITIVES[name] = (fwd, bwd)
            return bwd
        fwd.backward = with_backward
        return fwd
    return register


def _shape_msg(op: str, arrays: Sequence[np.ndarray], detail: str = "") -> str:
    shapes = ", ".join(str(a.shape) for a in arrays)
    msg = f"{op}: incompatible input shapes {shapes}"
    return f"{msg} ({detail})" if detail else msg


def apply_primitive(op: str, inputs: Sequence, **attrs) -> Tensor:
    """Run primitive ``op`` on ``inputs`` and record it on the active tape."""
    try:
        fwd, _ = _PRIMITIVES[op]
    except KeyError:
        raise KeyError(f"unknown primitive {op!r}") from None
    dtype = None
    for x in inputs:
        if type(x) is Tensor:
            dtype = x.data.dtype
            break
    tensors = tuple(x if type(x) is Tensor else Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))
                    for x in inputs)
    arrays = [t.data for t in tensors]
    try:
        out, saved = fwd(arrays, attrs)
    except ShapeError:
        raise
    except (ValueError, IndexError) as exc:
        raise ShapeError(_shape_msg(op, arrays, str(exc))) from exc
    if not np.isfinite(out).all():
        raise NumericError(f"{op} produced non-finite values (input shapes {[a.shape for a in arrays]})")
    needs_grad = False
    for t in tensors:
        if t.requires_grad:
            needs_grad = True
            break
    result = Tensor(out, requires_grad=needs_grad)
    if needs_grad:
        tapes = _stack()
        if tapes:
            tapes[-1].records.append(Record(op, tensors, result, saved, attrs))
    return result


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse-accumulate d(loss)/d(leaf) over ``tape``.

    Returns a map from every requires-grad leaf seen on the tape to its
    gradient (zeros when the leaf does not reach ``loss``).  Gradients are
    also accumulated into ``leaf.grad``.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    produced = {id(r.output): i for i, r in enumerate(tape.records)}
    if id(loss) not in produced:
        raise ValueError("loss was not produced by an operation on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for rec in tape.records:
        for t in rec.inputs:
            if t.requires_grad and id(t) not in produced:
                leaves[id(t)] = t

    for rec in reversed(tape.records[: produced[id(loss)] + 1]):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        _, bwd = _PRIMITIVES[rec.op]
        in_grads = bwd(g, [t.data for t in rec.inputs], rec.output.data, rec.saved, rec.attrs)
        for t, ig in zip(rec.inputs, in_grads):
            if ig is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig

    result: dict[Tensor, np.ndarray] = {}
    for key, leaf in leaves.items():
        g = grads.get(key)
        if g is None:
            g = np.zeros_like(leaf.data)
        g = np.asarray(g, dtype=leaf.data.dtype).reshape(leaf.shape)
        leaf.grad = g if leaf.grad is None else leaf.grad + g
        result[leaf] = g
    return result


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

@primitive("add")
def _add_fwd(arrays, attrs):
    a, b = arrays
    return a + b, None


@_add_fwd.backward
def _add_bwd(g, arrays, out, saved, attrs):
    a, b = arrays
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


@primitive("sub")
def _sub_fwd(arrays, attrs):
    a, b = arrays
    return a - b, None


@_sub_fwd.backward
def _sub_bwd(g, arrays, out, saved, attrs):
    a, b = arrays
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


@primitive("mul")
def _mul_fwd(arrays, attrs):
    a, b = arrays
    return a * b, None


@_mul_fwd.backward
def _mul_bwd(g, arrays, out, saved, attrs):
    a, b = arrays
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


@primitive("div")
def _div_fwd(arrays, attrs):
    a, b = arrays
    return a / b, None


@_div_fwd.backward
def _div_bwd(g, arrays, out, saved, attrs):
    a, b = arrays
    return _unbroadcast(g / b, a.shape), _unbroadcast(-g * out / b, b.shape)


@primitive("neg")
def _neg_fwd(arrays, attrs):
    return -arrays[0], None


@_neg_fwd.backward
def _neg_bwd(g, arrays, out, saved, attrs):
    return (-g,)


@primitive("square")
def _square_fwd(arrays, attrs):
    return arrays[0] * arrays[0], None


@_square_fwd.backward
def _square_bwd(g, arrays, out, saved, attrs):
    return (2.0 * arrays[0] * g,)


@primitive("minimum")
def _minimum_fwd(arrays, attrs):
    a, b = arrays
    return np.minimum(a, b), None


@_minimum_fwd.backward
def _minimum_bwd(g, arrays, out, saved, attrs):
    a, b = arrays
    # ties split the gradient evenly (matches a symmetric difference quotient)
    wa = np.where(a < b, 1.0, np.where(a > b, 0.0, 0.5)).astype(g.dtype)
    return _unbroadcast(g * wa, a.shape), _unbroadcast(g * (1.0 - wa), b.shape)


@primitive("tanh")
def _tanh_fwd(arrays, attrs):
    return np.tanh(arrays[0]), None


@_tanh_fwd.backward
def _tanh_bwd(g, arrays, out, saved, attrs):
    return (g * (1.0 - out * out),)


@primitive("sigmoid")
def _sigmoid_fwd(arrays, attrs):
    x = arrays[0]
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
    return out, None


@_sigmoid_fwd.backward
def _sigmoid_bwd(g, arrays, out, saved, attrs):
    return (g * out * (1.0 - out),)


@primitive("exp")
def _exp_fwd(arrays, attrs):
    return np.exp(arrays[0]), None


@_exp_fwd.backward
def _exp_bwd(g, arrays, out, saved, attrs):
    return (g * out,)


@primitive("log")
def _log_fwd(arrays, attrs):
    x = arrays[0]
    if np.any(x <= 0):
        raise NumericError("log: non-positive input")
    return np.log(x), None


@_log_fwd.backward
def _log_bwd(g, arrays, out, saved, attrs):
    return (g / arrays[0],)


# ---------------------------------------------------------------------------
# Normalizers
# ---------------------------------------------------------------------------

@primitive("softmax")
def _softmax_fwd(arrays, attrs):
    x = arrays[0]
    axis = attrs["axis"]
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True), None


@_softmax_fwd.backward
def _softmax_bwd(g, arrays, out, saved, attrs):
    axis = attrs["axis"]
    return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)


@primitive("log_softmax")
def _log_softmax_fwd(arrays, attrs):
    x = arrays[0]
    axis = attrs["axis"]
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True)), None


@_log_softmax_fwd.backward
def _log_softmax_bwd(g, arrays, out, saved, attrs):
    axis = attrs["axis"]
    return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)


# ---------------------------------------------------------------------------
# Linear algebra and reductions
# ---------------------------------------------------------------------------

@primitive("matmul")
def _matmul_fwd(arrays, attrs):
    a, b = arrays
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError(_shape_msg("matmul", arrays, "scalar operand"))
    k_a = a.shape[-1]
    k_b = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if k_a != k_b:
        raise ShapeError(_shape_msg("matmul", arrays, f"inner dimensions {k_a} != {k_b}"))
    return np.matmul(a, b), None


@_matmul_fwd.backward
def _matmul_bwd(g, arrays, out, saved, attrs):
    a, b = arrays
    if b.ndim == 1:
        ga = g[..., None] * b
        gb = np.tensordot(g, a, axes=(tuple(range(g.ndim)), tuple(range(a.ndim - 1))))
        return ga, gb
    if a.ndim == 1:
        ga = np.matmul(g, np.swapaxes(b, -1, -2))
        gb = a[:, None] * g[..., None, :]
        return ga, _unbroadcast(gb, b.shape)
    ga = np.matmul(g, np.swapaxes(b, -1, -2))
    if b.ndim == 2:
        gb = np.tensordot(a, g, axes=(tuple(range(a.ndim - 1)), tuple(range(g.ndim - 1))))
    else:
        gb = np.matmul(np.swapaxes(a, -1, -2), g)
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


@primitive("sum")
def _sum_fwd(arrays, attrs):
    return np.asarray(arrays[0].sum(axis=attrs["axis"], keepdims=attrs["keepdims"])), None


@_sum_fwd.backward
def _sum_bwd(g, arrays, out, saved, attrs):
    x = arrays[0]
    axis, keepdims = attrs["axis"], attrs["keepdims"]
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, x.shape).copy(),)


@primitive("mean")
def _mean_fwd(arrays, attrs):
    return np.asarray(arrays[0].mean(axis=attrs["axis"], keepdims=attrs["keepdims"])), None


@_mean_fwd.backward
def _mean_bwd(g, arrays, out, saved, attrs):
    x = arrays[0]
    axis, keepdims = attrs["axis"], attrs["keepdims"]
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g / count, x.shape).copy(),)


# ---------------------------------------------------------------------------
# Structural ops
# ---------------------------------------------------------------------------

@primitive("concat")
def _concat_fwd(arrays, attrs):
    axis = attrs["axis"]
    ndim = arrays[0].ndim
    ax = axis % ndim
    for a in arrays:
        if a.ndim != ndim or any(a.shape[i] != arrays[0].shape[i] for i in range(ndim) if i != ax):
            raise ShapeError(_shape_msg("concat", arrays, f"axis={axis}"))
    return np.concatenate(arrays, axis=axis), [a.shape[ax] for a in arrays]


@_concat_fwd.backward
def _concat_bwd(g, arrays, out, saved, attrs):
    splits = np.cumsum(saved)[:-1]
    return tuple(np.split(g, splits, axis=attrs["axis"]))


@primitive("stack")
def _stack_fwd(arrays, attrs):
    if any(a.shape != arrays[0].shape for a in arrays):
        raise ShapeError(_shape_msg("stack", arrays))
    return np.stack(arrays, axis=attrs["axis"]), None


@_stack_fwd.backward
def _stack_bwd(g, arrays, out, saved, attrs):
    axis = attrs["axis"]
    return tuple(np.take(g, i, axis=axis) for i in range(len(arrays)))


@primitive("reshape")
def _reshape_fwd(arrays, attrs):
    return arrays[0].reshape(attrs["shape"]), None


@_reshape_fwd.backward
def _reshape_bwd(g, arrays, out, saved, attrs):
    return (g.reshape(arrays[0].shape),)


@primitive("index")
def _index_fwd(arrays, attrs):
    return np.array(arrays[0][attrs["key"]]), None


@_index_fwd.backward
def _index_bwd(g, arrays, out, saved, attrs):
    full = np.zeros_like(arrays[0])
    np.add.at(full, attrs["key"], g)
    return (full,)


@primitive("embedding")
def _embedding_fwd(arrays, attrs):
    weight = arrays[0]
    ids = attrs["ids"]
    if weight.ndim != 2:
        raise ShapeError(_shape_msg("embedding", arrays, "weight must be 2-D"))
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ShapeError(_shape_msg("embedding", arrays, f"ids outside [0, {weight.shape[0]})"))
    return weight[ids], None


@_embedding_fwd.backward
def _embedding_bwd(g, arrays, out, saved, attrs):
    full = np.zeros_like(arrays[0])
    np.add.at(full, attrs["ids"], g)
    return (full,)


# ---------------------------------------------------------------------------
# Public functional surface
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    return apply_primitive("add", (a, b))


def sub(a, b) -> Tensor:
    return apply_primitive("sub", (a, b))


def mul(a, b) -> Tensor:
    return apply_primitive("mul", (a, b))


def div(a, b) -> Tensor:
    return apply_primitive("div", (a, b))


def neg(x) -> Tensor:
    return apply_primitive("neg", (x,))


def square(x) -> Tensor:
    return apply_primitive("square", (x,))


def minimum(a, b) -> Tensor:
    return apply_primitive("minimum", (a, b))


def tanh(x) -> Tensor:
    return apply_primitive("tanh", (x,))


def sigmoid(x) -> Tensor:
    return apply_primitive("sigmoid", (x,))


def exp(x) -> Tensor:
    return apply_primitive("exp", (x,))


def log(x) -> Tensor:
    return apply_primitive("log", (x,))


def softmax(x, axis: int = -1) -> Tensor:
    return apply_primitive("softmax", (x,), axis=axis)


def log_softmax(x, axis: int = -1) -> Tensor:
    return apply_primitive("log_softmax", (x,), axis=axis)


def matmul(a, b) -> Tensor:
    return apply_primitive("matmul", (a, b))


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    return apply_primitive("sum", (x,), axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    return apply_primitive("mean", (x,), axis=axis, keepdims=keepdims)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    return apply_primitive("concat", tuple(tensors), axis=axis)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    return apply_primitive("stack", tuple(tensors), axis=axis)


def reshape(x, shape) -> Tensor:
    return apply_primitive("reshape", (x,), shape=tuple(shape))


def index(x, key) -> Tensor:
    return apply_primitive("index", (x,), key=key)


def embedding(weight: Tensor, ids) -> Tensor:
    """Row lookup: ``weight[ids]`` with ids of any shape."""
    return apply_primitive("embedding", (weight,), ids=np.asarray(ids, dtype=np.int64))


def squared_error(a, b) -> Tensor:
    return square(sub(a, b))


def primitives() -> list[str]:
    return sorted(_PRIMITIVES)


# ---------------------------------------------------------------------------
# Verification and optimization
# ---------------------------------------------------------------------------

def grad_check(loss_fn: Callable[[Sequence[Tensor]], Tensor], params: Sequence[Tensor],
               eps: float = 1e-6, fd_dtype=None) -> float:
    """Max relative error between tape gradients and central differences.

    error = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8), maximized
    over every entry of every parameter.  ``loss_fn(params)`` must be
    deterministic and return a scalar Tensor.

    Difference quotients are evaluated by replaying the recorded primitives
    downstream of the perturbed parameter (checked to reproduce ``loss_fn``
    bitwise, otherwise ``loss_fn`` is called directly).  ``fd_dtype`` (e.g.
    ``np.longdouble``) evaluates the quotients in higher precision than the
    parameters so round-off does not swamp tiny gradient entries.
    """
    return max(grad_check_errors(loss_fn, params, eps, fd_dtype).values(), default=0.0)


def grad_check_errors(loss_fn, params: Sequence[Tensor], eps: float = 1e-6, fd_dtype=None) -> dict[int, float]:
    """Per-parameter (by position) maximum relative error; see :func:`grad_check`."""
    if not 0 < eps <= 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2], got {eps}")
    for p in params:
        p.requires_grad = True
        p.grad = None
    with Tape() as tape:
        loss = loss_fn(params)
    on_tape = any(r.output is loss for r in tape.records)
    if on_tape:
        grads = backward(tape, loss)
        analytic = [grads.get(p, np.zeros_like(p.data)) for p in params]
    else:
        analytic = [np.zeros_like(p.data) for p in params]

    evaluate = _direct_evaluator(loss_fn, params, fd_dtype)
    if on_tape:
        replay = _Replay(tape, loss, params, fd_dtype)
        if fd_dtype is not None or replay.reproduces(float(loss.data)):
            evaluate = replay.evaluate

    errors = {}
    for pi, (p, ga) in enumerate(zip(params, analytic)):
        base = p.data if fd_dtype is None else p.data.astype(fd_dtype)
        ga = ga.reshape(-1)
        worst = 0.0
        for i in range(base.size):
            flat = base.copy().reshape(-1)
            orig = flat[i]
            flat[i] = orig + eps
            up = evaluate(pi, flat.reshape(base.shape))
            flat[i] = orig - eps
            down = evaluate(pi, flat.reshape(base.shape))
            numeric = float((up - down) / (2 * eps))
            denom = max(abs(ga[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(ga[i] - numeric) / denom)
        errors[pi] = worst
    return errors


def _direct_evaluator(loss_fn, params, fd_dtype):
    def evaluate(pi, value):
        p = params[pi]
        saved = p.data
        originals = [q.data for q in params]
        try:
            if fd_dtype is not None:
                for q in params:
                    q.data = q.data.astype(fd_dtype)
            p.data = value
            result = np.asarray(loss_fn(params).data)
        finally:
            for q, d in zip(params, originals):
                q.data = d
            p.data = saved
        if not np.all(np.isfinite(result)):
            raise NumericError("loss is non-finite at a perturbed point")
        return result.reshape(())
    return evaluate


class _Replay:
    """Re-evaluates a recorded graph with one leaf replaced."""

    def __init__(self, tape: Tape, loss: Tensor, params: Sequence[Tensor], dtype=None):
        self.records = tape.records[: next(i for i, r in enumerate(tape.records) if r.output is loss) + 1]
        self.loss_id = id(loss)
        self.params = list(params)
        self.dtype = dtype
        self.base: dict[int, np.ndarray] = {}
        for p in self.params:
            self.base[id(p)] = self._cast(p.data)
        self.base.update(self._run(self.records, {}))
        self.plans = [self._plan(id(p)) for p in self.params]

    def _cast(self, arr):
        if self.dtype is None or arr.dtype.kind != "f":
            return arr
        return arr.astype(self.dtype)

    def _plan(self, leaf_id: int) -> list[Record]:
        dirty = {leaf_id}
        plan = []
        for rec in self.records:
            if any(id(t) in dirty for t in rec.inputs):
                plan.append(rec)
                dirty.add(id(rec.output))
        return plan

    def _run(self, records, overlay: dict) -> dict:
        base = self.base
        for rec in records:
            arrays = []
            for t in rec.inputs:
                key = id(t)
                if key in overlay:
                    arrays.append(overlay[key])
                elif key in base:
                    arrays.append(base[key])
                else:
                    arrays.append(self._cast(t.data))
            fwd, _ = _PRIMITIVES[rec.op]
            overlay[id(rec.output)], _ = fwd(arrays, rec.attrs)
        return overlay

    def reproduces(self, value: float) -> bool:
        return float(self.base[self.loss_id]) == value

    def evaluate(self, pi: int, value: np.ndarray):
        out = self._run(self.plans[pi], {id(self.params[pi]): value})
        result = out.get(self.loss_id, self.base[self.loss_id])
        if not np.all(np.isfinite(result)):
            raise NumericError("loss is non-finite at a perturbed point")
        return np.asarray(result).reshape(())


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **kwargs) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params], **kwargs)


def adam_step(params: Sequence[Tensor], grads, state: AdamState) -> None:
    """One bias-corrected Adam update, applied in place.

    ``grads`` is either a mapping ``{param: gradient}`` (as returned by
    :func:`backward`) or a sequence aligned with ``params``.
    """
    if isinstance(grads, dict):
        missing = [p for p in params if p not in grads]
        if missing:
            raise KeyError(f"no gradient for {len(missing)} parameter(s)")
        grads = [grads[p] for p in params]
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ShapeError("adam_step: params, grads and state have different lengths")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"adam_step: gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        p.data -= update.astype(p.data.dtype)
