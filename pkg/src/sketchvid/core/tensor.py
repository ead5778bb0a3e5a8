"""Dense tensors, parameters and the operation tape for reverse-mode autodiff."""
import threading

import numpy as np


class NonFiniteError(ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


def check_finite(arr, what="tensor"):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")
    return arr


class Tensor:
    """A dense float array that can take part in a recorded computation.

    Leaf tensors created with ``requires_grad=True`` receive their gradient in
    ``.grad`` after :func:`backward`. Tensors owned by a :class:`Parameter`
    route their gradient to the parameter instead.
    """

    __slots__ = ("data", "requires_grad", "param", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        check_finite(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.param = None
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; the functions live in ops to keep one code path
    def __add__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            return ops.add(self, other)
        return ops.add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            return ops.sub(self, other)
        return ops.add_scalar(self, -other)

    def __rsub__(self, other):
        from . import ops
        return ops.add_scalar(ops.scale(self, -1.0), other)

    def __mul__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


class Parameter:
    """A named trainable tensor with its gradient and RMSprop accumulator."""

    def __init__(self, name, value, dtype=np.float64):
        self.name = name
        self.tensor = Tensor(np.array(value, dtype=dtype), requires_grad=True)
        self.tensor.param = self
        self.grad = np.zeros_like(self.tensor.data)
        self.square_avg = np.zeros_like(self.tensor.data)

    @property
    def value(self):
        return self.tensor.data

    @value.setter
    def value(self, arr):
        arr = np.asarray(arr, dtype=self.tensor.data.dtype)
        if arr.shape != self.tensor.data.shape:
            raise ShapeError(f"{self.name}: cannot assign {arr.shape} to {self.tensor.data.shape}")
        self.tensor.data = check_finite(arr.copy(), self.name)

    @property
    def shape(self):
        return self.tensor.data.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.tensor.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


class _Record:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


_local = threading.local()


def _stack():
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape():
    tapes = _stack()
    return tapes[-1] if tapes else None


class Tape:
    """Records differentiable operations executed inside ``with Tape():``.

    Tapes are thread-local; operations outside any tape are not recorded and
    produce tensors with ``requires_grad=False``.
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, out, inputs, backward):
        self.records.append(_Record(out, inputs, backward))


def make_output(data, inputs, backward, what="operation"):
    """Wrap ``data`` as a Tensor and record it on the active tape if needed."""
    out = Tensor.__new__(Tensor)
    out.data = check_finite(data, what)
    out.param = None
    out.grad = None
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out.requires_grad = needs
    if needs:
        tape.record(out, inputs, backward)
    return out


def backward(loss, tape):
    """Accumulate d(loss)/d(leaf) into parameters and leaf tensors.

    Visits the tape in exact reverse execution order. Gradients accumulate
    across calls until :meth:`Parameter.zero_grad` is called.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any recorded operation")
    produced = {id(rec.out) for rec in tape.records}
    grads = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.out), None)
        if g is None:
            continue
        in_grads = rec.backward(g)
        for inp, gi in zip(rec.inputs, in_grads):
            if gi is None or not inp.requires_grad:
                continue
            if inp.param is not None:
                inp.param.grad += gi
            elif id(inp) not in produced:
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
            elif id(inp) in grads:
                grads[id(inp)] = grads[id(inp)] + gi
            else:
                grads[id(inp)] = gi
