"""Central finite-difference verification of analytic gradients."""

import numpy as np


def finite_difference(loss_fn, arrays, eps=1e-5):
    """Numeric gradients of ``loss_fn()`` w.r.t. every array in ``arrays``.

    ``loss_fn`` must read the arrays in place (they are perturbed
    element-by-element and restored). Returns a dict of gradients shaped
    like the inputs.
    """
    out = {}
    for name, arr in arrays.items():
        grad = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn()
            flat[i] = orig - eps
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        out[name] = grad
    return out


def max_relative_error(analytic, numeric):
    """Max |a - f| over all entries, normalized by the largest gradient
    magnitude (robust near zero-gradient coordinates)."""
    worst_abs = 0.0
    scale = 0.0
    for name in analytic:
        a = np.asarray(analytic[name], dtype=np.float64)
        f = np.asarray(numeric[name], dtype=np.float64)
        worst_abs = max(worst_abs, float(np.max(np.abs(a - f))) if a.size else 0.0)
        if a.size:
            scale = max(scale, float(np.max(np.abs(a))), float(np.max(np.abs(f))))
    return worst_abs / max(scale, 1e-8)


def grad_check(loss_fn, analytic, arrays, eps=1e-5):
    """Compare analytic gradients against central differences.

    Returns the max relative error across every array in ``arrays``.
    """
    numeric = finite_difference(loss_fn, arrays, eps=eps)
    return max_relative_error(analytic, numeric)
