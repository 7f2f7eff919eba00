"""Shared test utilities: the central finite-difference gradient oracle."""

from __future__ import annotations

import numpy as np

from cgnp.autodiff import Parameter

H = 1e-4
RTOL = 1e-3
ATOL = 1e-6


def finite_diff_grad(loss_fn, param: Parameter, h: float = H) -> np.ndarray:
    """Central differences of loss_fn() w.r.t. every entry of param.

    loss_fn rebuilds the computation from the param's current value and
    returns a float; entries are perturbed in place and restored.
    """
    grad = np.zeros_like(param.value)
    flat_value = param.value.ravel()
    flat_grad = grad.ravel()
    for i in range(flat_value.size):
        orig = flat_value[i]
        flat_value[i] = orig + h
        up = loss_fn()
        flat_value[i] = orig - h
        down = loss_fn()
        flat_value[i] = orig
        flat_grad[i] = (up - down) / (2.0 * h)
    return grad


def assert_grads_match(loss_fn, build_loss, params, rtol=RTOL, atol=ATOL):
    """Check every param's analytic gradient against finite differences.

    `build_loss()` returns the loss tensor (for the analytic side);
    `loss_fn()` returns its float value (for the oracle side).
    """
    from cgnp.autodiff import backward
    from cgnp.optim import zero_grads

    zero_grads(params)
    loss = build_loss()
    backward(loss)
    for p in params:
        expected = finite_diff_grad(loss_fn, p)
        np.testing.assert_allclose(
            p.grad, expected, rtol=rtol, atol=atol, err_msg=f"gradient mismatch for {p.name}"
        )
    zero_grads(params)
