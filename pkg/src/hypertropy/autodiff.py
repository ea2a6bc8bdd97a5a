"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

One Tape per optimization run, confined to a single thread; independent tapes
may run concurrently (the active tape is thread-local). Operations dispatch on
type: called with plain ndarrays they evaluate eagerly and return ndarrays,
called with at least one Variable they record onto the active tape. Creation
order is the topological order, so backward() is a single reverse sweep.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

_LN2 = float(np.log(2.0))
_ACOSH_GRAD_FLOOR = 1.0 + 1e-15  # removable singularity at argument 1

_local = threading.local()


class AutodiffError(RuntimeError):
    pass


class GradientNaNError(AutodiffError):
    """Raised when a backward step produces NaN; carries the offending op."""

    def __init__(self, op_id: int, op_name: str):
        super().__init__(f"NaN gradient produced by op #{op_id} ({op_name})")
        self.op_id = op_id
        self.op_name = op_name


class Variable:
    """A node on the tape: value, gradient accumulator, provenance."""

    __slots__ = ("value", "grad", "op_id", "op_name", "parents", "is_leaf", "name")

    def __init__(self, value, op_id, op_name, parents, is_leaf=False, name=None):
        self.value = value
        self.grad = None
        self.op_id = op_id
        self.op_name = op_name
        self.parents = parents  # tuple of (Variable, vjp: grad_out -> grad_in)
        self.is_leaf = is_leaf
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = self.name or self.op_name
        return f"Variable({tag}, shape={self.value.shape}, op_id={self.op_id})"

    # arithmetic sugar; ndarray operands are treated as constants
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    @property
    def T(self):
        return transpose(self)


class Tape:
    """Ordered record of operations plus the leaf (parameter) set."""

    def __init__(self):
        self.nodes: list[Variable] = []
        self.leaves: list[Variable] = []
        self._backward_done = False

    def __enter__(self):
        if getattr(_local, "tape", None) is not None:
            raise AutodiffError("a tape is already active on this thread")
        _local.tape = self
        return self

    def __exit__(self, *exc):
        _local.tape = None
        return False

    def leaf(self, value, name: Optional[str] = None) -> Variable:
        v = Variable(np.asarray(value, dtype=float), len(self.nodes), "leaf", (), True, name)
        self.nodes.append(v)
        self.leaves.append(v)
        return v

    def _record(self, op_name, value, parents) -> Variable:
        v = Variable(value, len(self.nodes), op_name, tuple(parents))
        self.nodes.append(v)
        return v

    def backward(self, loss: Variable) -> None:
        """Populate .grad on every node reachable from loss; leaves get zeros.

        Visits each node exactly once in reverse creation order. A second
        call without reset() is an error; NaN in any produced gradient raises
        GradientNaNError carrying the first offending op id.
        """
        if self._backward_done:
            raise AutodiffError("backward already ran on this tape; call reset() first")
        if not isinstance(loss, Variable):
            raise AutodiffError("loss must be a Variable")
        if loss.value.size != 1:
            raise AutodiffError(f"loss must be scalar, got shape {loss.value.shape}")
        self._backward_done = True
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            for parent, vjp in node.parents:
                g = vjp(node.grad)
                if np.isnan(g).any():
                    raise GradientNaNError(node.op_id, node.op_name)
                # gradients are never mutated in place, so aliasing g is safe
                parent.grad = g if parent.grad is None else parent.grad + g
        for leaf in self.leaves:
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.value)

    def reset(self) -> None:
        for node in self.nodes:
            node.grad = None
        self._backward_done = False

    def gradients(self) -> dict:
        return {leaf.name: leaf.grad for leaf in self.leaves}


def active_tape() -> Tape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        raise AutodiffError("no active tape; wrap the computation in `with Tape() as t:`")
    return tape


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Variable) else np.asarray(x, dtype=float)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gdim, sdim) in enumerate(zip(grad.shape, shape)) if sdim == 1 and gdim != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _unary(op_name, x, fwd, vjp):
    xv = value_of(x)
    out = fwd(xv)
    if not isinstance(x, Variable):
        return out
    tape = active_tape()
    return tape._record(op_name, out, [(x, lambda g, xv=xv, out=out: vjp(g, xv, out))])


def _binary(op_name, a, b, fwd, vjp_a, vjp_b):
    av, bv = value_of(a), value_of(b)
    try:
        out = fwd(av, bv)
    except ValueError as exc:
        raise AutodiffError(f"{op_name}: shape mismatch {av.shape} vs {bv.shape}") from exc
    if not isinstance(a, Variable) and not isinstance(b, Variable):
        return out
    tape = active_tape()
    parents = []
    if isinstance(a, Variable):
        parents.append((a, lambda g, av=av, bv=bv, out=out: _unbroadcast(vjp_a(g, av, bv, out), av.shape)))
    if isinstance(b, Variable):
        parents.append((b, lambda g, av=av, bv=bv, out=out: _unbroadcast(vjp_b(g, av, bv, out), bv.shape)))
    return tape._record(op_name, out, parents)


# --- elementwise binary -------------------------------------------------------

def add(a, b):
    return _binary("add", a, b, lambda x, y: x + y,
                   lambda g, x, y, o: g, lambda g, x, y, o: g)


def subtract(a, b):
    return _binary("subtract", a, b, lambda x, y: x - y,
                   lambda g, x, y, o: g, lambda g, x, y, o: -g)


def multiply(a, b):
    return _binary("multiply", a, b, lambda x, y: x * y,
                   lambda g, x, y, o: g * y, lambda g, x, y, o: g * x)


def divide(a, b):
    return _binary("divide", a, b, lambda x, y: x / y,
                   lambda g, x, y, o: g / y, lambda g, x, y, o: -g * x / (y * y))


def matmul(a, b):
    def vjp_a(g, x, y, o):
        return g @ y.T if y.ndim == 2 else np.outer(g, y)

    def vjp_b(g, x, y, o):
        return x.T @ g if x.ndim == 2 else np.outer(x, g)

    return _binary("matmul", a, b, lambda x, y: x @ y, vjp_a, vjp_b)


def minkowski_matrix(a, b):
    """Metric-weighted bilinear form A R B^T with R = diag(-1, 1, ..., 1).

    Rows of both operands are (d+1)-vectors; entry (i, j) is <a_i, b_j>_L.
    """
    def fwd(x, y):
        xm = x.copy()
        xm[:, 0] = -xm[:, 0]
        return xm @ y.T

    def vjp_a(g, x, y, o):
        out = g @ y
        out[:, 0] = -out[:, 0]
        return out

    def vjp_b(g, x, y, o):
        out = g.T @ x
        out[:, 0] = -out[:, 0]
        return out

    return _binary("minkowski_matrix", a, b, fwd, vjp_a, vjp_b)


# --- elementwise unary -----------------------------------------------------

def negative(x):
    return _unary("negative", x, lambda v: -v, lambda g, v, o: -g)


def exp(x):
    return _unary("exp", x, np.exp, lambda g, v, o: g * o)


def log(x):
    return _unary("log", x, np.log, lambda g, v, o: g / v)


def log2(x):
    return _unary("log2", x, np.log2, lambda g, v, o: g / (v * _LN2))


def sqrt(x):
    return _unary("sqrt", x, np.sqrt, lambda g, v, o: g / (2.0 * o))


def square(x):
    return _unary("square", x, np.square, lambda g, v, o: 2.0 * g * v)


def tanh(x):
    return _unary("tanh", x, np.tanh, lambda g, v, o: g * (1.0 - o * o))


def sigmoid(x):
    def fwd(v):
        out = np.empty_like(v)
        pos = v >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ev = np.exp(v[~pos])
        out[~pos] = ev / (1.0 + ev)
        return out

    return _unary("sigmoid", x, fwd, lambda g, v, o: g * o * (1.0 - o))


def softplus(x):
    return _unary("softplus", x, lambda v: np.logaddexp(0.0, v),
                  lambda g, v, o: g / (1.0 + np.exp(-v)))


def leaky_relu(x, slope: float = 0.1):
    return _unary("leaky_relu", x,
                  lambda v: np.where(v > 0, v, slope * v),
                  lambda g, v, o: g * np.where(v > 0, 1.0, slope))


def arccosh(x):
    """arccosh with the argument clamped at 1 in the value and 1+1e-15 in the
    gradient denominator (x == 1 is a removable singularity of the distance)."""
    return _unary("arccosh", x,
                  lambda v: np.arccosh(np.maximum(v, 1.0)),
                  lambda g, v, o: g / np.sqrt(np.maximum(v, _ACOSH_GRAD_FLOOR) ** 2 - 1.0))


def clamp_min(x, lo: float):
    """max(x, lo); gradient is identity strictly inside the active region, zero outside."""
    return _unary("clamp_min", x,
                  lambda v: np.maximum(v, lo),
                  lambda g, v, o: g * (v > lo))


# --- shape ops -------------------------------------------------------------

def transpose(x):
    return _unary("transpose", x, lambda v: v.T.copy(), lambda g, v, o: g.T)


def vsum(x, axis=None, keepdims: bool = False):
    def fwd(v):
        return np.asarray(v.sum(axis=axis, keepdims=keepdims))

    def vjp(g, v, o):
        if axis is None:
            return np.broadcast_to(g, v.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, v.shape).copy()

    return _unary("sum", x, fwd, vjp)


def mean(x, axis=None, keepdims: bool = False):
    xv = value_of(x)
    count = xv.size if axis is None else xv.shape[axis]
    return vsum(x, axis=axis, keepdims=keepdims) / float(count)


def row_softmax(x):
    """Softmax along axis 1 of a 2-D array."""
    def fwd(v):
        shifted = v - v.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def vjp(g, v, o):
        return o * (g - (g * o).sum(axis=1, keepdims=True))

    return _unary("row_softmax", x, fwd, vjp)


def concat_cols(a, b):
    """Concatenate two 2-D blocks along axis 1."""
    def fwd(x, y):
        return np.concatenate([x, y], axis=1)

    def vjp_a(g, x, y, o):
        return g[:, : x.shape[1]]

    def vjp_b(g, x, y, o):
        return g[:, x.shape[1]:]

    return _binary("concat_cols", a, b, fwd, vjp_a, vjp_b)


def take_rows(x, idx):
    idx = np.asarray(idx, dtype=int)

    def fwd(v):
        return v[idx]

    def vjp(g, v, o):
        out = np.zeros_like(v)
        np.add.at(out, idx, g)
        return out

    return _unary("take_rows", x, fwd, vjp)


def op_set() -> tuple:
    """Names of the supported differentiable primitives."""
    return (
        "add", "subtract", "multiply", "divide", "negative", "matmul",
        "minkowski_matrix", "exp", "log", "log2", "sqrt", "square", "tanh",
        "sigmoid", "softplus", "leaky_relu", "arccosh", "clamp_min",
        "transpose", "sum", "mean", "row_softmax", "concat_cols", "take_rows",
        "broadcast",
    )


# --- gradient checking ----------------------------------------------------------

@dataclass
class GradCheckReport:
    passed: bool
    tol: float
    atol: float
    max_rel_err: float
    per_param: dict = field(default_factory=dict)  # name -> max relative error

    def __str__(self):
        lines = [f"grad_check: {'PASS' if self.passed else 'FAIL'} "
                 f"(max rel err {self.max_rel_err:.3e}, tol {self.tol:g})"]
        for name, err in sorted(self.per_param.items()):
            lines.append(f"  {name}: {err:.3e}")
        return "\n".join(lines)


def grad_check(build: Callable[[dict], object], params: dict, step: float = 1e-5,
               tol: float = 1e-6, atol: float = 1e-8) -> GradCheckReport:
    """Compare tape gradients of build(params) against central differences.

    `build` must be deterministic and accept a dict mapping names either to
    Variables (tape pass) or plain ndarrays (finite-difference passes), and
    return a scalar. An element passes when |ad - fd| <= max(atol, tol *
    max(|ad|, |fd|)); the reported relative error uses the same denominator
    floored at atol/tol.
    """
    arrays = {k: np.asarray(v, dtype=float) for k, v in params.items()}
    with Tape() as tape:
        leaves = {k: tape.leaf(v.copy(), k) for k, v in arrays.items()}
        loss = build(leaves)
        if not isinstance(loss, Variable):
            raise AutodiffError("build() must return a Variable when given Variables")
        tape.backward(loss)
        analytic = {k: leaves[k].grad.copy() for k in arrays}

    def eval_at(vals: dict) -> float:
        out = build(vals)
        return float(value_of(out))

    floor = atol / tol
    per_param = {}
    worst = 0.0
    for name, base in arrays.items():
        fd = np.zeros_like(base)
        flat = base.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = eval_at(arrays)
            flat[i] = orig - step
            lo = eval_at(arrays)
            flat[i] = orig
            fd_flat[i] = (hi - lo) / (2.0 * step)
        ad = analytic[name]
        denom = np.maximum(np.maximum(np.abs(ad), np.abs(fd)), floor)
        rel = float((np.abs(ad - fd) / denom).max()) if ad.size else 0.0
        per_param[name] = rel
        worst = max(worst, rel)
    return GradCheckReport(passed=worst < tol, tol=tol, atol=atol,
                           max_rel_err=worst, per_param=per_param)
