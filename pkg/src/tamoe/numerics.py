"""Dense array primitives with hand-written backward passes.

Every differentiable op comes as a pair ``op(...) -> (out, cache)`` and
``op_backward(dout, cache) -> grads``, in the style of classic numpy
deep-learning code. Arrays are plain ``numpy.ndarray``; there is no graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Raised when array extents do not line up."""


class DomainError(ValueError):
    """Raised for arguments outside an operation's domain."""


class DeterminismError(RuntimeError):
    """Raised when a loss function is not reproducible."""


class Parameter:
    """A trainable array with its gradient buffer.

    ``frozen`` parameters keep a gradient buffer (always zero after
    ``zero_grad``/backward) so optimizers can treat all parameters alike.
    """

    def __init__(self, value, frozen: bool = False):
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)
        self.frozen = frozen

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def accumulate(self, g):
        if g.shape != self.value.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {self.value.shape}")
        if not self.frozen:
            self.grad += g

    def __repr__(self):
        return f"Parameter(shape={self.value.shape}, frozen={self.frozen})"


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4
    checked: int = 0
    skipped: list[str] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def worst(self):
        return max(self.errors.items(), key=lambda kv: kv[1], default=(None, 0.0))


def _float(x):
    """As an array, keeping any floating dtype (float32, longdouble)."""
    x = np.asarray(x)
    return x if np.issubdtype(x.dtype, np.floating) else x.astype(float)


# ---------------------------------------------------------------------------
# matmul


def matmul(a, b):
    """Matrix product of the last axis of ``a`` with the first axis of ``b``.

    ``a`` may carry leading batch axes, ``(..., k) @ (k, n)``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b, (a, b)


def matmul_backward(dout, cache):
    a, b = cache
    da = dout @ b.T
    a2 = a.reshape(-1, a.shape[-1])
    db = a2.T @ dout.reshape(-1, dout.shape[-1])
    return da, db


# ---------------------------------------------------------------------------
# softmax


def softmax_with_temperature(logits, tau: float = 1.0, axis: int = -1):
    """Temperature softmax, max-subtracted for stability."""
    if not tau > 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    logits = _float(logits)
    if logits.shape[axis] < 1:
        raise DimensionError("softmax over an empty axis")
    z = logits / tau
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / np.sum(e, axis=axis, keepdims=True)
    return out, (out, tau, axis)


def softmax_backward(dout, cache):
    out, tau, axis = cache
    inner = np.sum(dout * out, axis=axis, keepdims=True)
    return out * (dout - inner) / tau


def log_softmax(logits, axis: int = -1):
    z = logits - np.max(logits, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def sigmoid(x):
    # split by sign so exp never overflows
    x = _float(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_KINDS = ("tanh", "sigmoid", "relu")


def elementwise(kind: str, x):
    x = _float(x)
    if kind == "tanh":
        out = np.tanh(x)
    elif kind == "sigmoid":
        out = sigmoid(x)
    elif kind == "relu":
        out = np.maximum(x, 0.0)
    else:
        raise DomainError(f"unknown nonlinearity {kind!r}; expected one of {_KINDS}")
    return out, (kind, x, out)


def elementwise_backward(dout, cache):
    kind, x, out = cache
    if kind == "tanh":
        return dout * (1.0 - out * out)
    if kind == "sigmoid":
        return dout * out * (1.0 - out)
    # subgradient 0 at exactly 0
    return dout * (x > 0)


# ---------------------------------------------------------------------------
# concat / split


def concat(parts, axis: int = 0):
    parts = [np.asarray(p) for p in parts]
    if not parts:
        raise DimensionError("concat of zero parts")
    ref = parts[0]
    ax = axis % ref.ndim
    for p in parts[1:]:
        if p.ndim != ref.ndim or any(
            p.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != ax
        ):
            raise DimensionError(
                f"cannot concatenate shapes {[q.shape for q in parts]} along axis {axis}"
            )
    sizes = [p.shape[ax] for p in parts]
    return np.concatenate(parts, axis=ax), (sizes, ax)


def split(x, sizes, axis: int = 0):
    """Inverse of :func:`concat`; also its backward pass."""
    x = np.asarray(x)
    ax = axis % x.ndim
    if sum(sizes) != x.shape[ax]:
        raise DimensionError(f"split sizes {sizes} do not cover extent {x.shape[ax]}")
    bounds = np.cumsum(sizes)[:-1]
    return np.split(x, bounds, axis=ax)


def concat_backward(dout, cache):
    sizes, ax = cache
    return split(dout, sizes, axis=ax)


# ---------------------------------------------------------------------------
# gradient checking


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8
    )


def finite_difference_grad(loss_fn, params, epsilon: float = 1e-5, tolerance: float = 1e-4,
                           max_entries: int | None = None, rng=None) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``params`` maps names to :class:`Parameter`; their ``grad`` buffers must
    already hold the analytic gradient of ``loss_fn()`` at the current values.
    Frozen parameters are skipped. With ``max_entries`` only a random subset
    of each parameter's entries is probed.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    base = loss_fn()
    if loss_fn() != base:
        raise DeterminismError("loss_fn returned different values for identical parameters")
    report = GradCheckReport(tolerance=tolerance)
    for name, p in params.items():
        if p.frozen:
            report.skipped.append(name)
            continue
        flat = p.value.reshape(-1)
        gflat = p.grad.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = rng if rng is not None else np.random.default_rng(0)
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        worst = 0.0
        for i in idx:
            old = flat[i]
            flat[i] = old + epsilon
            lp = loss_fn()
            flat[i] = old - epsilon
            lm = loss_fn()
            flat[i] = old
            num = (lp - lm) / (2 * epsilon)
            worst = max(worst, float(relative_error(gflat[i], num)))
        report.errors[name] = worst
        report.checked += idx.size
    return report
