"""Dense float32 tensors with reverse-mode differentiation on an explicit tape.

The engine is deliberately small: it provides exactly the forward operators a
SqueezeNet-style network needs (convolution, pooling, channel concat, a few
elementwise ops) plus a tape that records every executed op so a scalar loss
can be differentiated back to the leaves. Ops executed while no tape is active
run in plain inference mode.

Everything is float32 and row-major [N, C, H, W]. There is no broadcasting
beyond the per-channel bias add inside ``conv2d``; callers that need an affine
transform use ``affine`` with Python scalars. Single-threaded execution is
deterministic: the same inputs replay to bit-identical outputs and gradients.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operands have incompatible shapes."""


class GradientError(RuntimeError):
    """Raised on invalid backward calls or non-finite gradients."""


class Tensor:
    """A dense f32 array, optionally carrying a gradient buffer.

    ``requires_grad`` marks leaves the caller wants gradients for; every op
    output derived (directly or transitively) from such a leaf participates in
    the active tape automatically.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float32)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={tuple(self.shape)}, requires_grad={self.requires_grad}{label})"


class TapeNode:
    __slots__ = ("name", "inputs", "output", "backward_fn")

    def __init__(self, name, inputs, output, backward_fn):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed ops.

    Nodes are appended in execution order, so inputs always precede the nodes
    consuming them; ``backward`` replays the list in exact reverse order.
    Custom gradient rules (e.g. the spike nonlinearity) are registered once in
    the module-level registry (`register_gradient_rule`) and referenced by id.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []
        self._output_ids: set[int] = set()

    def record(self, name, inputs, output, backward_fn) -> None:
        self.nodes.append(TapeNode(name, tuple(inputs), output, backward_fn))
        self._output_ids.add(id(output))

    def produced(self, t: Tensor) -> bool:
        return id(t) in self._output_ids

    def __len__(self) -> int:
        return len(self.nodes)


_TAPE_STACK: list[Tape] = []


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


@contextlib.contextmanager
def recording(tape: Optional[Tape] = None):
    """Context manager that makes ``tape`` (or a fresh one) the active tape."""
    tape = tape if tape is not None else Tape()
    _TAPE_STACK.append(tape)
    try:
        yield tape
    finally:
        _TAPE_STACK.pop()


def record_op(name: str, inputs: Sequence[Tensor], out_data: np.ndarray,
              backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    """Create the output tensor for an op and record it on the active tape.

    ``backward_fn`` receives the upstream gradient and returns one gradient
    array (or None) per input, aligned with ``inputs``. Returned arrays must
    not alias mutable engine state; the engine never mutates them in place.
    """
    tape = active_tape()
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs and tape is not None)
    if tape is not None and needs:
        tape.record(name, inputs, out, backward_fn)
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad tensor reachable from ``loss``.

    Replays the tape in reverse execution order, accumulating chain-rule
    contributions. Tensors on the tape that end up with no gradient path to
    the loss get an all-zeros buffer. Aborts with the op name if any gradient
    turns non-finite.
    """
    if not tape.nodes:
        raise GradientError("backward called before any forward op was recorded")
    if not tape.produced(loss):
        raise GradientError("loss tensor was not produced on this tape")
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")

    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.output.grad
        if g is None:
            continue
        grads = node.backward_fn(g)
        for t, gt in zip(node.inputs, grads):
            if gt is None or not (t.requires_grad):
                continue
            gt = np.asarray(gt, dtype=np.float32)
            if np.isnan(gt).any():
                raise GradientError(f"NaN gradient produced in op '{node.name}'")
            if t.grad is None:
                t.grad = gt
            else:
                # never in-place: gt may alias upstream buffers
                t.grad = t.grad + gt
    for node in tape.nodes:
        for t in node.inputs + (node.output,):
            if t.requires_grad and t.grad is None:
                t.grad = np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# custom gradient rules (used by the spike nonlinearity)
# ---------------------------------------------------------------------------

_GRAD_RULES: dict[str, tuple[Callable, Callable]] = {}


def register_gradient_rule(rule_id: str, forward: Callable, backward_rule: Callable) -> None:
    """Register a unary op with a hand-written backward rule.

    ``forward(x, **kw) -> out`` and ``backward_rule(g, x, out, **kw) -> grad_x``
    operate on raw numpy arrays.
    """
    _GRAD_RULES[rule_id] = (forward, backward_rule)


def apply_rule(rule_id: str, x: Tensor, name: Optional[str] = None, **kw) -> Tensor:
    if rule_id not in _GRAD_RULES:
        raise KeyError(f"no gradient rule registered under id '{rule_id}'")
    fwd, bwd = _GRAD_RULES[rule_id]
    out_data = fwd(x.data, **kw)
    x_data = x.data

    def backward_fn(g):
        return (bwd(g, x_data, out_data, **kw),)

    return record_op(name or rule_id, (x,), out_data, backward_fn)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor, name: str = "add") -> Tensor:
    _check_same_shape("add", a, b)
    return record_op(name, (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor, name: str = "sub") -> Tensor:
    _check_same_shape("sub", a, b)
    return record_op(name, (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor, name: str = "mul") -> Tensor:
    _check_same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return record_op(name, (a, b), a_data * b_data,
                     lambda g: (g * b_data, g * a_data))


def affine(x: Tensor, scale: float, shift: float = 0.0, name: str = "affine") -> Tensor:
    """Elementwise ``scale * x + shift`` with Python-scalar coefficients."""
    scale = float(scale)
    out = x.data * np.float32(scale) + np.float32(shift)
    return record_op(name, (x,), out, lambda g: (g * np.float32(scale),))


def relu(x: Tensor, name: str = "relu") -> Tensor:
    mask = x.data > 0
    return record_op(name, (x,), np.where(mask, x.data, np.float32(0.0)),
                     lambda g: (g * mask,))


def sum_all(x: Tensor, name: str = "sum") -> Tensor:
    x_shape = x.data.shape
    out = np.asarray(x.data.sum(dtype=np.float32)).reshape(())

    def backward_fn(g):
        return (np.broadcast_to(g.reshape(()), x_shape),)

    return record_op(name, (x,), out, backward_fn)


# ---------------------------------------------------------------------------
# convolution / pooling / concat
# ---------------------------------------------------------------------------

def conv_output_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    hout = (h + 2 * padding - kh) // stride + 1
    wout = (w + 2 * padding - kw) // stride + 1
    return hout, wout


def _windows(xp: np.ndarray, kh: int, kw: int, hout: int, wout: int, stride: int) -> np.ndarray:
    """Stack all receptive-field windows of a padded [N,C,H,W] array.

    Returns [N, C, kh, kw, hout, wout]; each (i, j) kernel offset is a strided
    slice copy, so downstream contractions see contiguous memory.
    """
    n, c = xp.shape[0], xp.shape[1]
    cols = np.empty((n, c, kh, kw, hout, wout), dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + hout * stride:stride, j:j + wout * stride:stride]
    return cols


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0,
           name: str = "conv2d") -> Tensor:
    """2-D cross-correlation with per-output-channel bias.

    Input [N,Cin,H,W], weight [Cout,Cin,Kh,Kw], bias [Cout]. Output spatial
    size is floor((H + 2p - K)/stride) + 1 per axis.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"{name}: conv2d needs 4-D input/weight, got {x.shape} and {w.shape}")
    n, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(
            f"{name}: input channels {cin} != weight channels {cin_w}"
            f" (input {x.shape}, weight {w.shape})")
    if b.data.shape != (cout,):
        raise ShapeError(f"{name}: bias shape {b.shape} != ({cout},)")
    if stride < 1 or padding < 0:
        raise ShapeError(f"{name}: invalid stride={stride} padding={padding}")
    hout, wout = conv_output_hw(h, wd, kh, kw, stride, padding)
    if hout < 1 or wout < 1:
        raise ShapeError(f"{name}: kernel {kh}x{kw} too large for input {x.shape} "
                         f"with padding {padding}")

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = _windows(xp, kh, kw, hout, wout, stride)
    out = np.tensordot(cols, w.data, axes=([1, 2, 3], [1, 2, 3]))  # [N,Hout,Wout,Cout]
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    out += b.data[None, :, None, None]

    w_data = w.data
    x_needs = x.requires_grad
    x_shape = x.shape

    def backward_fn(g):
        grad_w = np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5]))
        grad_b = g.sum(axis=(0, 2, 3), dtype=np.float32)
        grad_x = None
        if x_needs:
            gcols = np.tensordot(g, w_data, axes=([1], [0]))  # [N,Ho,Wo,Cin,Kh,Kw]
            gcols = gcols.transpose(0, 3, 4, 5, 1, 2)  # [N,Cin,Kh,Kw,Ho,Wo]
            gxp = np.zeros((x_shape[0], x_shape[1], h + 2 * padding, wd + 2 * padding),
                           dtype=np.float32)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + hout * stride:stride,
                        j:j + wout * stride:stride] += gcols[:, :, i, j]
            grad_x = gxp[:, :, padding:padding + h, padding:padding + wd] if padding else gxp
        return (grad_x, grad_w, grad_b)

    return record_op(name, (x, w, b), out, backward_fn)


def maxpool2d(x: Tensor, kernel: int, stride: int, name: str = "maxpool2d") -> Tensor:
    """Max pooling; backward routes gradient to the first argmax in scan order."""
    if x.data.ndim != 4:
        raise ShapeError(f"{name}: maxpool2d needs 4-D input, got {x.shape}")
    n, c, h, w = x.shape
    if kernel > h or kernel > w:
        raise ShapeError(f"{name}: kernel {kernel} larger than input {h}x{w}")
    hout, wout = conv_output_hw(h, w, kernel, kernel, stride, 0)
    cols = _windows(x.data, kernel, kernel, hout, wout, stride)
    flat = cols.reshape(n, c, kernel * kernel, hout, wout)
    arg = flat.argmax(axis=2)  # first occurrence on ties
    out = np.take_along_axis(flat, arg[:, :, None], axis=2)[:, :, 0]

    def backward_fn(g):
        grad_x = np.zeros((n, c, h, w), dtype=np.float32)
        ki, kj = np.divmod(arg, kernel)
        hi = (np.arange(hout) * stride)[None, None, :, None] + ki
        wi = (np.arange(wout) * stride)[None, None, None, :] + kj
        ni = np.arange(n)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        np.add.at(grad_x, (ni, ci, hi, wi), g)
        return (grad_x,)

    return record_op(name, (x,), out, backward_fn)


def global_avgpool(x: Tensor, name: str = "global_avgpool") -> Tensor:
    """Mean over the spatial dims: [N,C,H,W] -> [N,C]."""
    if x.data.ndim != 4:
        raise ShapeError(f"{name}: global_avgpool needs 4-D input, got {x.shape}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), dtype=np.float32)
    inv = np.float32(1.0 / (h * w))

    def backward_fn(g):
        return (np.broadcast_to((g * inv)[:, :, None, None], (n, c, h, w)),)

    return record_op(name, (x,), out, backward_fn)


def concat_channels(a: Tensor, b: Tensor, name: str = "concat") -> Tensor:
    """Concatenate along the channel axis; a's channels precede b's."""
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ShapeError(f"{name}: concat needs 4-D inputs, got {a.shape} and {b.shape}")
    na, ca, ha, wa = a.shape
    nb, cb, hb, wb = b.shape
    if (na, ha, wa) != (nb, hb, wb):
        raise ShapeError(f"{name}: spatial/batch mismatch {a.shape} vs {b.shape}")
    out = np.concatenate([a.data, b.data], axis=1)

    def backward_fn(g):
        return (g[:, :ca], g[:, ca:])

    return record_op(name, (a, b), out, backward_fn)
