"""Taped reverse-mode automatic differentiation over dense float64 arrays.

Exact-shape semantics: there is no implicit broadcasting anywhere. Callers
reshape or tile explicitly. Every operation validates operand shapes and
checks its result for NaN/Inf.

Recording is controlled by an active :class:`Tape`; outside a tape, the same
functions run forward-only, which is what evaluation and finite-difference
probes use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "ShapeError",
    "NonFiniteError",
    "backward",
    "grad_check",
    "GradCheckReport",
    "tensor",
    "zeros",
    "add",
    "sub",
    "neg",
    "mul",
    "scale",
    "matmul",
    "add_bias",
    "concat",
    "sigmoid",
    "tanh",
    "relu",
    "softmax",
    "sum",
    "mean",
    "take_rows",
    "slice_rows",
    "reshape",
    "sigmoid_bce",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


class Tensor:
    """Dense float64 array, immutable by convention once created."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor created from non-finite values")
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.data.shape} is not a scalar")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


class Parameter(Tensor):
    """Trainable tensor with a persistent gradient accumulator."""

    __slots__ = ("name", "grad")

    def __init__(self, name: str, data):
        super().__init__(data)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape})"


_ACTIVE: "Tape | None" = None

# When not None, relu appends a copy of each input array here; grad_check uses
# the traces to detect finite-difference probes that straddle a kink.
_RELU_TRACE: "list[np.ndarray] | None" = None


class Tape:
    """Execution-ordered operation record; backward replays it once, in reverse."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._out_ids: set[int] = set()

    def __enter__(self) -> "Tape":
        global _ACTIVE
        if _ACTIVE is not None:
            raise RuntimeError("a tape is already active")
        _ACTIVE = self
        return self

    def __exit__(self, *exc) -> bool:
        global _ACTIVE
        _ACTIVE = None
        return False


def _out(op: str, arr: np.ndarray) -> Tensor:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced a non-finite value")
    t = Tensor.__new__(Tensor)
    t.data = arr if arr.dtype == np.float64 else arr.astype(np.float64)
    return t


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
    if _ACTIVE is not None:
        _ACTIVE.nodes.append((out, inputs, backward_fn))
        _ACTIVE._out_ids.add(id(out))


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} must match exactly")


def tensor(data) -> Tensor:
    return Tensor(data)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    out = _out("add", a.data + b.data)
    _record(out, (a, b), lambda g: (g, g))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    out = _out("sub", a.data - b.data)
    _record(out, (a, b), lambda g: (g, -g))
    return out


def neg(a: Tensor) -> Tensor:
    out = _out("neg", -a.data)
    _record(out, (a,), lambda g: (-g,))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    out = _out("mul", a.data * b.data)
    _record(out, (a, b), lambda g: (g * b.data, g * a.data))
    return out


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = _out("scale", a.data * c)
    _record(out, (a,), lambda g: (g * c,))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: shapes {a.data.shape} and {b.data.shape} are not compatible")
    out = _out("matmul", a.data @ b.data)
    _record(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))
    return out


def add_bias(m: Tensor, bias: Tensor) -> Tensor:
    """Add a length-f bias vector to every row of an (n, f) matrix."""
    if m.data.ndim != 2 or bias.data.shape != (m.data.shape[1],):
        raise ShapeError(f"add_bias: shapes {m.data.shape} and {bias.data.shape} are not compatible")
    out = _out("add_bias", m.data + bias.data[None, :])
    _record(out, (m, bias), lambda g: (g, g.sum(axis=0)))
    return out


def concat(parts, axis: int = 0) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat: empty part list")
    ndim = parts[0].data.ndim
    if ndim not in (1, 2) or axis not in (0, 1) or axis >= ndim:
        raise ShapeError(f"concat: unsupported ndim {ndim} with axis {axis}")
    other = 1 - axis
    for p in parts[1:]:
        if p.data.ndim != ndim or (ndim == 2 and p.data.shape[other] != parts[0].data.shape[other]):
            raise ShapeError(
                f"concat: shapes {parts[0].data.shape} and {p.data.shape} disagree off axis {axis}"
            )
    out = _out("concat", np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        if axis == 0:
            return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    _record(out, parts, backward_fn)
    return out


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid_values(np.asarray(a.data, dtype=np.float64).copy())
    out = _out("sigmoid", y)
    _record(out, (a,), lambda g: (g * y * (1.0 - y),))
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = _out("tanh", y)
    _record(out, (a,), lambda g: (g * (1.0 - y * y),))
    return out


def relu(a: Tensor) -> Tensor:
    if _RELU_TRACE is not None:
        _RELU_TRACE.append(a.data.copy())
    out = _out("relu", np.maximum(a.data, 0.0))
    mask = a.data > 0.0  # subgradient 0 at exactly 0
    _record(out, (a,), lambda g: (g * mask,))
    return out


def softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError(f"softmax: expected a 1-d vector, got shape {a.data.shape}")
    shifted = a.data - a.data.max()
    e = np.exp(shifted)
    y = e / e.sum()
    out = _out("softmax", y)
    _record(out, (a,), lambda g: (y * (g - np.dot(g, y)),))
    return out


def sum(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        out = _out("sum", np.asarray(a.data.sum()))
        shape = a.data.shape
        _record(out, (a,), lambda g: (np.full(shape, float(g)),))
        return out
    if a.data.ndim != 2 or axis not in (0, 1):
        raise ShapeError(f"sum: axis {axis} invalid for shape {a.data.shape}")
    out = _out("sum", a.data.sum(axis=axis))
    n = a.data.shape[axis]

    def backward_fn(g):
        if axis == 0:
            return (np.repeat(g[None, :], n, axis=0),)
        return (np.repeat(g[:, None], n, axis=1),)

    _record(out, (a,), backward_fn)
    return out


def mean(a: Tensor) -> Tensor:
    out = _out("mean", np.asarray(a.data.mean()))
    shape, size = a.data.shape, a.data.size
    _record(out, (a,), lambda g: (np.full(shape, float(g) / size),))
    return out


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows of an (n, f) matrix; gradient scatter-adds into the source."""
    idx = np.asarray(idx, dtype=np.intp)
    if a.data.ndim != 2 or idx.ndim != 1:
        raise ShapeError(f"take_rows: matrix shape {a.data.shape}, index shape {idx.shape}")
    out = _out("take_rows", a.data[idx])
    rows = a.data.shape[0]

    def backward_fn(g):
        z = np.zeros((rows, a.data.shape[1]), dtype=np.float64)
        np.add.at(z, idx, g)
        return (z,)

    _record(out, (a,), backward_fn)
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim not in (1, 2):
        raise ShapeError(f"slice_rows: unsupported shape {a.data.shape}")
    if not (0 <= start <= stop <= a.data.shape[0]):
        raise ShapeError(f"slice_rows: range [{start}, {stop}) outside shape {a.data.shape}")
    out = _out("slice_rows", a.data[start:stop].copy())

    def backward_fn(g):
        z = np.zeros_like(a.data)
        z[start:stop] = g
        return (z,)

    _record(out, (a,), backward_fn)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = _out("reshape", a.data.reshape(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: {a.data.shape} to {shape}: {exc}") from None
    orig = a.data.shape
    _record(out, (a,), lambda g: (g.reshape(orig),))
    return out


def sigmoid_bce(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against {0,1} labels.

    Fused with the sigmoid for numerical stability: the forward value is
    mean(log(1+e^z) - y*z) and the gradient is (sigmoid(z) - y)/n, both finite
    for any logit magnitude.
    """
    y = np.asarray(labels, dtype=np.float64)
    if logits.data.ndim != 1 or y.shape != logits.data.shape:
        raise ShapeError(f"sigmoid_bce: logits {logits.data.shape} vs labels {y.shape}")
    z = logits.data
    value = np.mean(np.logaddexp(0.0, z) - y * z)
    out = _out("sigmoid_bce", np.asarray(value))
    n = z.shape[0]
    _record(out, (logits,), lambda g: (float(g) * (_sigmoid_values(z.copy()) - y) / n,))
    return out


def backward(tape: Tape, loss: Tensor, wrt=None):
    """Accumulate d(loss)/d(param) into every Parameter reached from loss.

    Gradients add onto whatever is already in ``Parameter.grad``; call
    ``zero_grad`` between steps. When ``wrt`` is given, the gradients for
    those tensors are returned as arrays (zeros when unreachable).
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if not tape.nodes:
        raise ValueError("backward: tape is empty")
    if id(loss) not in tape._out_ids:
        raise ValueError("backward: loss tensor is detached from this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    touched: dict[int, Parameter] = {}
    for out, inputs, backward_fn in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, ig in zip(inputs, backward_fn(g)):
            if ig is None:
                continue
            acc = grads.get(id(t))
            if acc is None:
                grads[id(t)] = np.array(ig, dtype=np.float64)
            else:
                acc += ig
            if isinstance(t, Parameter):
                touched[id(t)] = t

    for pid, p in touched.items():
        p.grad += grads[pid].reshape(p.grad.shape)

    if wrt is not None:
        return [grads.get(id(t), np.zeros_like(t.data)).reshape(t.data.shape) for t in wrt]
    return None


@dataclass
class ParamCheckResult:
    name: str
    max_rel_err: float
    checked: int
    kinks: int


@dataclass
class GradCheckReport:
    per_param: list[ParamCheckResult]
    max_rel_err: float
    kinks: int
    tol: float
    passed: bool


def _eval_traced(f) -> tuple[float, list[np.ndarray]]:
    global _RELU_TRACE
    _RELU_TRACE = []
    try:
        value = f().item()
        trace = _RELU_TRACE
    finally:
        _RELU_TRACE = None
    return value, trace


def _crosses_kink(trace_plus: list[np.ndarray], trace_minus: list[np.ndarray]) -> bool:
    for a, b in zip(trace_plus, trace_minus):
        if np.any(np.sign(a) != np.sign(b)):
            return True
    return False


def grad_check(f, params, step: float = 1e-5, tol: float = 1e-4, rel_floor: float = 1e-8) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued ``f`` with central differences.

    ``f`` takes no arguments and closes over ``params``; it must be
    deterministic. Elements whose probes straddle a relu kink are excluded and
    counted. Resets the gradients of ``params`` as a side effect.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    backward(tape, loss)
    analytic = {p.name: p.grad.copy() for p in params}
    for p in params:
        p.zero_grad()

    results: list[ParamCheckResult] = []
    worst = 0.0
    total_kinks = 0
    for p in params:
        flat = p.data.reshape(-1)
        max_err = 0.0
        kinks = 0
        checked = 0
        a_flat = analytic[p.name].reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + step
            f_plus, trace_plus = _eval_traced(f)
            flat[i] = orig - step
            f_minus, trace_minus = _eval_traced(f)
            flat[i] = orig
            if _crosses_kink(trace_plus, trace_minus):
                kinks += 1
                continue
            fd = (f_plus - f_minus) / (2.0 * step)
            err = abs(a_flat[i] - fd) / max(abs(a_flat[i]), abs(fd), rel_floor)
            max_err = max(max_err, err)
            checked += 1
        results.append(ParamCheckResult(p.name, max_err, checked, kinks))
        worst = max(worst, max_err)
        total_kinks += kinks
    return GradCheckReport(results, worst, total_kinks, tol, worst <= tol)
