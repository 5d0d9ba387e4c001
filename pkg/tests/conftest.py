"""Shared oracles: grid quadrature and central finite differences.

These are the independent references the closed forms and analytic
gradients are checked against; they never call the code paths they verify.
"""

import numpy as np
import pytest


def quad_inner_1d(f, g, lo=-8.0, hi=8.0, step=0.01):
    """Trapezoidal integral of f(x) * g(x) on a 1D grid."""
    xs = np.arange(lo, hi + 0.5 * step, step)[:, None]
    return float(np.trapezoid(f(xs) * g(xs), dx=step))


def quad_inner_2d(f, g, lo=-8.0, hi=8.0, step=0.01):
    """Iterated trapezoidal integral of f * g on a square 2D grid."""
    ax = np.arange(lo, hi + 0.5 * step, step)
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    vals = (f(pts) * g(pts)).reshape(gx.shape)
    return float(np.trapezoid(np.trapezoid(vals, dx=step, axis=1), dx=step))


def central_diff_grad(fn, x, h=1e-5):
    """Central finite differences of a scalar function of an array."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        step = h * (1.0 + abs(x[idx]))
        xp = x.copy()
        xp[idx] += step
        xm = x.copy()
        xm[idx] -= step
        grad[idx] = (fn(xp) - fn(xm)) / (2.0 * step)
        it.iternext()
    return grad


def rel_grad_err(analytic, numeric, floor_frac=1e-2):
    """Max relative error with a floor tied to the gradient's own scale.

    Double-precision central differences carry roundoff noise of about
    eps * f / h, so components far below the largest gradient entry cannot
    be certified at a small relative tolerance.  Entries under
    ``floor_frac`` of the max component are therefore measured against
    that floor, which turns the check into a tight absolute one there.
    """
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    floor = max(1e-8, floor_frac * float(np.max(np.abs(numeric), initial=0.0)))
    scale = np.maximum(np.abs(numeric), np.maximum(np.abs(analytic), floor))
    return float(np.max(np.abs(analytic - numeric) / scale))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
