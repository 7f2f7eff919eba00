"""Reverse-mode autodiff over dense float64 matrices.

Everything the models train with lives here: a small taped ``Tensor`` type,
the layer primitives (affine, relu, batch norm, the bounded-softplus scale
head), the gather/segment ops that back the graph convolution, and the
Gaussian negative log-likelihood. Values are strictly 2-D float64 arrays;
row vectors (biases, batch-norm scale/shift) have shape ``(1, d)``.

Gradients are exact analytic rules per op. The test suite holds every op,
and random compositions of them, to a central finite-difference oracle.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "BatchNormState",
    "backward",
    "affine",
    "matmul",
    "add",
    "add_rowvec",
    "relu",
    "bounded_softplus",
    "batch_norm",
    "gaussian_nll",
    "concat_cols",
    "slice_cols",
    "gather_rows",
    "segment_sum",
    "segment_mean",
    "row_scale",
]


class Tensor:
    """A node in the reverse-mode graph: a 2-D float64 value and its gradient.

    Leaves are built directly from arrays; ops return tensors holding a
    closure that routes the output gradient back to the parents. ``value``
    is treated as immutable once created (ops never write into inputs).
    """

    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(self, value, _parents=(), _vjp=None):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"tensors are 2-D matrices, got shape {arr.shape}")
        self.value = arr
        self.grad = np.zeros_like(arr)
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape})"


class Parameter(Tensor):
    """A named trainable leaf."""

    __slots__ = ("name",)

    def __init__(self, name: str, value):
        super().__init__(value)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` for every reachable node.

    ``loss`` must hold exactly one element. Leaves that did not contribute
    keep whatever gradient they already had (zero right after creation or
    after ``zero_grads``).
    """
    if loss.value.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    loss.grad = loss.grad + 1.0
    for node in reversed(order):
        if node._vjp is not None:
            node._vjp(node.grad)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(x, w) -> Tensor:
    x, w = _as_tensor(x), _as_tensor(w)
    if x.value.shape[1] != w.value.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {x.shape} @ {w.shape}")
    out = Tensor(x.value @ w.value, (x, w))

    def vjp(g):
        x.grad += g @ w.value.T
        w.grad += x.value.T @ g

    out._vjp = vjp
    return out


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.value + b.value, (a, b))

    def vjp(g):
        a.grad += g
        b.grad += g

    out._vjp = vjp
    return out


def add_rowvec(x, b) -> Tensor:
    """x + b with b a (1, d) row vector broadcast over rows."""
    x, b = _as_tensor(x), _as_tensor(b)
    if b.value.shape != (1, x.value.shape[1]):
        raise ValueError(f"row vector shape {b.shape} does not match {x.shape}")
    out = Tensor(x.value + b.value, (x, b))

    def vjp(g):
        x.grad += g
        b.grad += g.sum(axis=0, keepdims=True)

    out._vjp = vjp
    return out


def affine(x, w, b) -> Tensor:
    """x @ w + b, the linear map inside every layer."""
    return add_rowvec(matmul(x, w), b)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def relu(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.value, 0.0), (x,))

    def vjp(g):
        # subgradient at exactly 0 is 0 (deterministic tie-break)
        x.grad += g * (x.value > 0.0)

    out._vjp = vjp
    return out


def bounded_softplus(s) -> Tensor:
    """Scale head 0.1 + 0.9 * ln(1 + exp(s)), overflow-safe for large |s|.

    Output is >= 0.1 for every finite input and strictly increasing in s,
    which keeps predicted standard deviations off zero.
    """
    s = _as_tensor(s)
    out = Tensor(0.1 + 0.9 * np.logaddexp(0.0, s.value), (s,))

    def vjp(g):
        sig = 0.5 * (1.0 + np.tanh(0.5 * s.value))  # overflow-safe sigmoid
        s.grad += g * (0.9 * sig)

    out._vjp = vjp
    return out


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------


class BatchNormState:
    """Scale/shift parameters plus running statistics for one layer.

    ``gamma``/``beta`` are trainable (1, d) parameters. Running statistics
    are plain arrays updated in train mode as
    ``running = momentum * running + (1 - momentum) * batch``; the batch
    variance is biased (divide by n).
    """

    def __init__(self, name: str, width: int, momentum: float = 0.9, eps: float = 1e-5):
        if not 0.0 < momentum < 1.0:
            raise ValueError(f"momentum must be in (0, 1), got {momentum}")
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.name = name
        self.gamma = Parameter(f"{name}.gamma", np.ones((1, width)))
        self.beta = Parameter(f"{name}.beta", np.zeros((1, width)))
        self.running_mean = np.zeros((1, width))
        self.running_var = np.ones((1, width))
        self.momentum = float(momentum)
        self.eps = float(eps)

    @property
    def width(self) -> int:
        return self.gamma.value.shape[1]


def batch_norm(x, state: BatchNormState, train: bool) -> Tensor:
    """Normalize each feature column, then scale/shift by gamma/beta.

    Train mode uses batch statistics over the rows (and updates the running
    statistics); eval mode uses the running statistics. The backward rule is
    exact through the batch statistics in train mode.
    """
    x = _as_tensor(x)
    n, d = x.value.shape
    if d != state.width:
        raise ValueError(f"batch norm width mismatch: input {d}, state {state.width}")
    gamma, beta = state.gamma, state.beta

    if train:
        if n < 2:
            raise ValueError(f"batch norm needs at least 2 rows in train mode, got {n}")
        mean = x.value.mean(axis=0, keepdims=True)
        var = x.value.var(axis=0, keepdims=True)  # biased: divide by n
        inv_std = 1.0 / np.sqrt(var + state.eps)
        xhat = (x.value - mean) * inv_std
        m = state.momentum
        state.running_mean = m * state.running_mean + (1.0 - m) * mean
        state.running_var = m * state.running_var + (1.0 - m) * var

        def vjp(g):
            beta.grad += g.sum(axis=0, keepdims=True)
            gamma.grad += (g * xhat).sum(axis=0, keepdims=True)
            gx = g * gamma.value
            x.grad += (inv_std / n) * (
                n * gx
                - gx.sum(axis=0, keepdims=True)
                - xhat * (gx * xhat).sum(axis=0, keepdims=True)
            )

    else:
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (x.value - state.running_mean) * inv_std

        def vjp(g):
            beta.grad += g.sum(axis=0, keepdims=True)
            gamma.grad += (g * xhat).sum(axis=0, keepdims=True)
            x.grad += g * (gamma.value * inv_std)

    return Tensor(gamma.value * xhat + beta.value, (x, gamma, beta), vjp)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def gaussian_nll(y, mu, sigma) -> Tensor:
    """Mean over entries of 0.5*ln(2*pi*sigma^2) + (y - mu)^2 / (2*sigma^2).

    Returns a (1, 1) scalar tensor. Raises on any non-positive sigma.
    """
    y, mu, sigma = _as_tensor(y), _as_tensor(mu), _as_tensor(sigma)
    if not (y.shape == mu.shape == sigma.shape):
        raise ValueError(f"nll shape mismatch: y {y.shape}, mu {mu.shape}, sigma {sigma.shape}")
    sv = sigma.value
    if np.any(sv <= 0.0):
        raise ValueError("gaussian_nll requires strictly positive sigma")
    resid = y.value - mu.value
    terms = 0.5 * np.log(2.0 * np.pi * sv**2) + resid**2 / (2.0 * sv**2)
    count = terms.size
    out = Tensor([[terms.mean()]], (y, mu, sigma))

    def vjp(g):
        scale = g[0, 0] / count
        mu.grad += scale * (-resid / sv**2)
        y.grad += scale * (resid / sv**2)
        sigma.grad += scale * (1.0 / sv - resid**2 / sv**3)

    out._vjp = vjp
    return out


# ---------------------------------------------------------------------------
# gather / segment / layout ops (used by pooling and the graph convolution)
# ---------------------------------------------------------------------------


def concat_cols(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.shape[0] != b.value.shape[0]:
        raise ValueError(f"concat_cols row mismatch: {a.shape} vs {b.shape}")
    da = a.value.shape[1]
    out = Tensor(np.concatenate([a.value, b.value], axis=1), (a, b))

    def vjp(g):
        a.grad += g[:, :da]
        b.grad += g[:, da:]

    out._vjp = vjp
    return out


def slice_cols(x, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.value[:, start:stop], (x,))

    def vjp(g):
        x.grad[:, start:stop] += g

    out._vjp = vjp
    return out


def gather_rows(x, index) -> Tensor:
    """Rows x[index[k]] stacked; duplicate indices accumulate in backward."""
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.intp)
    out = Tensor(x.value[index], (x,))

    def vjp(g):
        np.add.at(x.grad, index, g)

    out._vjp = vjp
    return out


def segment_sum(x, segments, num_segments: int) -> Tensor:
    """Row sums per segment id; empty segments produce zero rows."""
    x = _as_tensor(x)
    segments = np.asarray(segments, dtype=np.intp)
    if segments.shape != (x.value.shape[0],):
        raise ValueError("segments must give one id per row")
    sums = np.zeros((num_segments, x.value.shape[1]))
    np.add.at(sums, segments, x.value)
    out = Tensor(sums, (x,))

    def vjp(g):
        x.grad += g[segments]

    out._vjp = vjp
    return out


def segment_mean(x, segments, num_segments: int) -> Tensor:
    """Row means per segment id; raises if any segment is empty."""
    x = _as_tensor(x)
    segments = np.asarray(segments, dtype=np.intp)
    if segments.shape != (x.value.shape[0],):
        raise ValueError("segments must give one id per row")
    counts = np.bincount(segments, minlength=num_segments)
    if np.any(counts == 0):
        raise ValueError("segment_mean over an empty segment")
    sums = np.zeros((num_segments, x.value.shape[1]))
    np.add.at(sums, segments, x.value)
    out = Tensor(sums / counts[:, None], (x,))

    def vjp(g):
        x.grad += g[segments] / counts[segments, None]

    out._vjp = vjp
    return out


def row_scale(x, scale) -> Tensor:
    """Multiply row i by the constant scale[i] (no gradient for the scales)."""
    x = _as_tensor(x)
    scale = np.asarray(scale, dtype=np.float64)
    if scale.shape != (x.value.shape[0],):
        raise ValueError("row_scale needs one factor per row")
    out = Tensor(x.value * scale[:, None], (x,))

    def vjp(g):
        x.grad += g * scale[:, None]

    out._vjp = vjp
    return out
