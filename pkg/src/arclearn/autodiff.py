"""Reverse-mode automatic differentiation over dense float64 tensors.

Supplies the handful of operators the two network architectures need:
1D convolution, affine maps, ReLU, the LSTM cell nonlinearities, mean
squared error, and an L2 weight penalty. Every operator accepts either the
documented single-example shape or the same shape with a leading batch
axis; no other broadcasting exists.

Gradients flow through a :class:`Tape`: the topologically ordered record
of the operations that produced a result, replayed in reverse. Building
block ops store a backward closure on the output tensor; constants
(``requires_grad=False``) terminate the graph, so gradients are never
computed for network inputs.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ParamStore",
    "no_grad",
    "add",
    "sub",
    "mul",
    "square",
    "concat",
    "narrow",
    "reshape",
    "sum_all",
    "mean_all",
    "relu",
    "sigmoid",
    "tanh",
    "affine",
    "conv1d",
    "lstm_cell",
    "mse",
    "l2_penalty",
    "grad_check",
    "GradCheckReport",
]

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A dense float64 array plus an accumulated gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Run reverse-mode accumulation from this scalar result."""
        Tape(self).backward()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Convenience arithmetic (tensor-tensor needs matching shapes; python
    # scalars are allowed on either side).
    def __add__(self, other):
        return add(self, _lift(other, self))

    def __radd__(self, other):
        return add(_lift(other, self), self)

    def __sub__(self, other):
        return sub(self, _lift(other, self))

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, _lift(other, self))

    def __rmul__(self, other):
        return mul(_lift(other, self), self)

    def __neg__(self):
        return mul(self, _lift(-1.0, self))


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full_like(like.data, float(value)))


def _node(data, parents, backward) -> Tensor:
    """Create an op output; records the backward closure only when needed."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


class Tape:
    """Topologically ordered record of the ops behind one result tensor.

    Built once per backward pass and discarded afterwards, so training
    steps never see stale state. The order invariant (inputs precede
    users) comes from the iterative depth-first walk.
    """

    def __init__(self, result: Tensor):
        if result.data.size != 1:
            raise ValueError("backward requires a scalar result")
        self.result = result
        self.nodes = self._topo_order(result)

    @staticmethod
    def _topo_order(root: Tensor) -> list:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        self.result.accumulate(np.ones_like(self.result.data))
        for node in reversed(self.nodes):
            if node._backward is not None:
                node._backward(node.grad)

    def clear(self) -> None:
        """Drop graph edges and intermediate gradients to free memory.

        Leaf tensors (parameters, constants) keep their accumulated
        gradients; only interior op nodes are released.
        """
        for node in self.nodes:
            if node._backward is not None:
                node._parents = ()
                node._backward = None
                node.grad = None
        self.nodes = []


# ---------------------------------------------------------------------------
# elementwise and shape ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g)

    return _node(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(-g)

    return _node(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate(g * b.data)
        if b.requires_grad:
            b.accumulate(g * a.data)

    return _node(a.data * b.data, (a, b), backward)


def square(x: Tensor) -> Tensor:
    def backward(g):
        if x.requires_grad:
            x.accumulate(2.0 * x.data * g)

    return _node(x.data * x.data, (x,), backward)


def concat(tensors, axis: int) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate(g[tuple(idx)])

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[idx] = g
            x.accumulate(full)

    return _node(x.data[idx].copy(), (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    def backward(g):
        if x.requires_grad:
            x.accumulate(g.reshape(x.data.shape))

    return _node(x.data.reshape(shape), (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        if x.requires_grad:
            x.accumulate(np.full_like(x.data, float(g)))

    return _node(x.data.sum(), (x,), backward)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def backward(g):
        if x.requires_grad:
            x.accumulate(np.full_like(x.data, float(g) / n))

    return _node(x.data.mean(), (x,), backward)


# ---------------------------------------------------------------------------
# nonlinearities


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # subgradient at exactly 0 is 0

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * mask)

    return _node(np.where(mask, x.data, 0.0), (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * y * (1.0 - y))

    return _node(y, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g * (1.0 - y * y))

    return _node(y, (x,), backward)


# ---------------------------------------------------------------------------
# linear maps


def affine(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """out = x @ weight.T (+ bias). x is [m] or [batch, m]; weight is [n, m]."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ValueError(f"affine shape mismatch: x {x.shape}, weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ValueError(f"affine bias shape {bias.shape} != ({weight.shape[0]},)")

    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        if x.requires_grad:
            x.accumulate(g @ weight.data)
        if weight.requires_grad:
            if g.ndim == 1:
                weight.accumulate(np.outer(g, x.data))
            else:
                weight.accumulate(g.T @ x.data)
        if bias is not None and bias.requires_grad:
            bias.accumulate(g if g.ndim == 1 else g.sum(axis=0))

    return _node(out, parents, backward)


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Valid (no-padding) 1D convolution.

    x is [c_in, length] or [batch, c_in, length]; kernel is
    [c_out, c_in, k]; bias is [c_out]. Output length is length - k + 1.
    """
    if kernel.ndim != 3:
        raise ValueError(f"kernel must be 3-d, got shape {kernel.shape}")
    c_out, c_in, k = kernel.shape
    if bias.shape != (c_out,):
        raise ValueError(f"bias shape {bias.shape} != ({c_out},)")
    batched = x.ndim == 3
    if x.ndim not in (2, 3) or x.shape[-2] != c_in:
        raise ValueError(f"input shape {x.shape} incompatible with kernel {kernel.shape}")
    if x.shape[-1] < k:
        raise ValueError(f"input length {x.shape[-1]} shorter than kernel {k}")

    x3 = x.data if batched else x.data[None]
    b_size, _, length = x3.shape
    t_out = length - k + 1
    windows = np.lib.stride_tricks.sliding_window_view(x3, k, axis=2)
    # flatten each window to a (c_in * k) row so the convolution is a matmul
    win2 = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(
        b_size, t_out, c_in * k
    )
    k2 = kernel.data.reshape(c_out, c_in * k)
    out3 = (win2 @ k2.T).transpose(0, 2, 1) + bias.data[:, None]

    def backward(g):
        g3 = g if batched else g[None]
        if kernel.requires_grad:
            gflat = np.ascontiguousarray(g3.transpose(0, 2, 1)).reshape(-1, c_out)
            kernel.accumulate(
                (gflat.T @ win2.reshape(-1, c_in * k)).reshape(c_out, c_in, k)
            )
        if bias.requires_grad:
            bias.accumulate(g3.sum(axis=(0, 2)))
        if x.requires_grad:
            gx = np.zeros_like(x3)
            for j in range(k):
                gx[:, :, j : j + t_out] += kernel.data[:, :, j].T @ g3
            x.accumulate(gx if batched else gx[0])

    return _node(out3 if batched else out3[0], (x, kernel, bias), backward)


def lstm_cell(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, w_x: Tensor, w_h: Tensor, bias: Tensor):
    """One step of a standard LSTM cell; returns (h_t, c_t).

    Gate order in the stacked parameters is input, forget, candidate,
    output. x_t is [d_in] or [batch, d_in]; states are [h] or [batch, h];
    w_x is [4h, d_in], w_h is [4h, h], bias is [4h].

    The cell is fused into two tape nodes with a handwritten backward:
    training scans hundreds of steps per example, and per-gate graph nodes
    dominate the runtime otherwise. ``h_t`` routes its share of the
    gradient into ``c_t``, whose node then unwinds the input, forget, and
    candidate gates.
    """
    hidden = h_prev.shape[-1]
    if w_x.shape[0] != 4 * hidden or w_h.shape != (4 * hidden, hidden):
        raise ValueError(
            f"gate parameter shapes {w_x.shape}/{w_h.shape} do not match hidden size {hidden}"
        )
    if x_t.shape[:-1] != h_prev.shape[:-1] or h_prev.shape != c_prev.shape:
        raise ValueError(
            f"state shapes {x_t.shape}/{h_prev.shape}/{c_prev.shape} inconsistent"
        )

    z = x_t.data @ w_x.data.T + h_prev.data @ w_h.data.T + bias.data
    i = 1.0 / (1.0 + np.exp(-z[..., 0 * hidden : 1 * hidden]))
    f = 1.0 / (1.0 + np.exp(-z[..., 1 * hidden : 2 * hidden]))
    g = np.tanh(z[..., 2 * hidden : 3 * hidden])
    o = 1.0 / (1.0 + np.exp(-z[..., 3 * hidden : 4 * hidden]))
    c_data = f * c_prev.data + i * g
    tanh_c = np.tanh(c_data)

    def spread(dz_slice, row_lo, row_hi, grad_x=True):
        # route a gate pre-activation gradient to x, h_prev and parameters
        if grad_x and x_t.requires_grad:
            x_t.accumulate(dz_slice @ w_x.data[row_lo:row_hi])
        if h_prev.requires_grad:
            h_prev.accumulate(dz_slice @ w_h.data[row_lo:row_hi])
        if w_x.requires_grad:
            update = (
                np.outer(dz_slice, x_t.data) if dz_slice.ndim == 1 else dz_slice.T @ x_t.data
            )
            w_x.grad[row_lo:row_hi] += update
        if w_h.requires_grad:
            update = (
                np.outer(dz_slice, h_prev.data)
                if dz_slice.ndim == 1
                else dz_slice.T @ h_prev.data
            )
            w_h.grad[row_lo:row_hi] += update
        if bias.requires_grad:
            bias.grad[row_lo:row_hi] += dz_slice if dz_slice.ndim == 1 else dz_slice.sum(0)

    def backward_c(dc):
        if c_prev.requires_grad:
            c_prev.accumulate(dc * f)
        dzi = dc * g * i * (1.0 - i)
        dzf = dc * c_prev.data * f * (1.0 - f)
        dzg = dc * i * (1.0 - g * g)
        _ensure_grads(w_x, w_h, bias)
        spread(dzi, 0, hidden)
        spread(dzf, hidden, 2 * hidden)
        spread(dzg, 2 * hidden, 3 * hidden)

    c_t = _node(c_data, (x_t, h_prev, c_prev, w_x, w_h, bias), backward_c)

    def backward_h(dh):
        if c_t.requires_grad:
            c_t.accumulate(dh * o * (1.0 - tanh_c * tanh_c))
        dzo = dh * tanh_c * o * (1.0 - o)
        _ensure_grads(w_x, w_h, bias)
        spread(dzo, 3 * hidden, 4 * hidden)

    h_t = _node(o * tanh_c, (c_t, x_t, h_prev, w_x, w_h, bias), backward_h)
    return h_t, c_t


def _ensure_grads(*tensors):
    for t in tensors:
        if t.requires_grad and t.grad is None:
            t.grad = np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# losses


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared differences (scalar)."""
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    return mean_all(square(sub(pred, target)))


def l2_penalty(store: "ParamStore") -> Tensor:
    """Sum of squares over the weight tensors; biases are excluded."""
    total = None
    for name, tensor in store.items():
        if store.is_bias(name):
            continue
        term = sum_all(square(tensor))
        total = term if total is None else add(total, term)
    if total is None:
        raise ValueError("parameter store has no weight tensors")
    return total


# ---------------------------------------------------------------------------
# parameters


class ParamStore:
    """Named map of trainable tensors, each paired with its gradient.

    Bias tensors are flagged at registration; the L2 penalty and the
    optimizer's weight decay skip them.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._bias_names: set[str] = set()

    def add(self, name: str, data, bias: bool = False) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        t.grad = np.zeros_like(t.data)
        self._params[name] = t
        if bias:
            self._bias_names.add(name)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def is_bias(self, name: str) -> bool:
        return name in self._bias_names

    def n_coords(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            else:
                t.grad.fill(0.0)

    def copy(self) -> "ParamStore":
        other = ParamStore()
        for name, t in self.items():
            other.add(name, t.data.copy(), bias=self.is_bias(name))
        return other


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    """Outcome of comparing tape gradients with central differences."""

    max_rel_error: float
    worst_param: str
    worst_index: int
    n_coords: int
    epsilon: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return (
            f"{verdict}: max rel error {self.max_rel_error:.3e} at "
            f"{self.worst_param}[{self.worst_index}] over {self.n_coords} "
            f"coordinates (eps={self.epsilon:g}, tol={self.tolerance:g})"
        )


def grad_check(
    f,
    store: ParamStore,
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare the tape gradient of ``f(store)`` against central differences.

    Every parameter coordinate is perturbed by +/- epsilon. The relative
    error uses max(|analytic| + |numeric|, 1e-4) as denominator, so
    coordinates whose gradients are both below ~1e-4 are effectively
    compared with an absolute tolerance of tolerance * 1e-4.
    """
    store.zero_grad()
    loss = f(store)
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError("f must return a scalar Tensor")
    loss.backward()
    analytic = {name: t.grad.copy() for name, t in store.items()}

    worst = (0.0, "", -1)
    n_coords = 0
    with no_grad():
        for name, t in store.items():
            flat = t.data.reshape(-1)
            grad = analytic[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                f_plus = float(f(store).data)
                flat[i] = orig - epsilon
                f_minus = float(f(store).data)
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * epsilon)
                denom = max(abs(grad[i]) + abs(numeric), 1e-4)
                rel = abs(grad[i] - numeric) / denom
                if rel > worst[0]:
                    worst = (rel, name, i)
                n_coords += 1

    return GradCheckReport(
        max_rel_error=worst[0],
        worst_param=worst[1],
        worst_index=worst[2],
        n_coords=n_coords,
        epsilon=epsilon,
        tolerance=tolerance,
    )
