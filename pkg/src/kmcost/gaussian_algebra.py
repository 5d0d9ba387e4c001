"""Closed-form algebra of isotropic Gaussians and their mixtures.

All heavier machinery in this package (matrix costs, spectral diagnostics,
trainers) is built on two facts: inner products of Gaussian bumps have a
closed form, and stacking those inner products over sample batches yields
Gaussian Gram matrices.  This module holds both layers:

* exact L2 inner products / norms of Gaussians and discrete mixtures, with
  the full multivariate normalization constant, and
* dimension-scaled squared-distance and Gram-matrix construction for sample
  batches, where the constant may be dropped (``exp_only``) because costs
  are invariant to it.

Convention: the per-dimension scaling of squared distances applies only in
the Gram-matrix layer (`scaled_sq_dist` / `gauss_gram`).  The exact algebra
(`gauss_inner` and friends) uses raw distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Constant handling for Gram matrices: keep the multivariate normal
# constant, or drop it (costs only need the exponential part).
FULL_PDF = "full_pdf"
EXP_ONLY = "exp_only"
_CONSTANT_MODES = (FULL_PDF, EXP_ONLY)


def gauss_norm_const(dim: int, variance: float) -> float:
    """Normalization constant (2*pi*v)^(-d/2) of an isotropic Gaussian."""
    return (2.0 * math.pi * variance) ** (-0.5 * dim)


@dataclass(frozen=True)
class GaussianComponent:
    """One isotropic Gaussian bump N(x - mean; variance)."""

    mean: np.ndarray
    variance: float

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1 or mean.size < 1:
            raise ValueError("mean must be a vector of length >= 1")
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def dim(self) -> int:
        return self.mean.size

    def pdf(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the density at points x (shape (..., d))."""
        x = np.asarray(x, dtype=float)
        delta = x - self.mean
        sq = np.sum(np.square(delta), axis=-1)
        return gauss_norm_const(self.dim, self.variance) * np.exp(
            -sq / (2.0 * self.variance)
        )


@dataclass(frozen=True)
class GaussianMixture:
    """Finite mixture of isotropic Gaussians with normalized weights."""

    weights: np.ndarray
    components: tuple[GaussianComponent, ...]

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        comps = tuple(self.components)
        if len(comps) < 1:
            raise ValueError("mixture needs at least one component")
        if weights.shape != (len(comps),):
            raise ValueError("one weight per component required")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        total = weights.sum()
        if total <= 0:
            raise ValueError("weights must not all be zero")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ValueError("all components must share one dimension")
        object.__setattr__(self, "weights", weights / total)
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.components])

    def variances(self) -> np.ndarray:
        return np.array([c.variance for c in self.components])

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.weights[0] * self.components[0].pdf(x)
        for w, c in zip(self.weights[1:], self.components[1:]):
            out = out + w * c.pdf(x)
        return out

    def shifted(self, offset) -> "GaussianMixture":
        """Mixture translated by a constant offset (scalar or d-vector)."""
        off = np.broadcast_to(np.asarray(offset, dtype=float), (self.dim,))
        comps = tuple(
            GaussianComponent(c.mean + off, c.variance) for c in self.components
        )
        return GaussianMixture(self.weights, comps)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n iid samples; component choice then isotropic noise."""
        idx = rng.choice(len(self.components), size=n, p=self.weights)
        means = self.means()[idx]
        stds = np.sqrt(self.variances())[idx]
        return means + stds[:, None] * rng.standard_normal((n, self.dim))


@dataclass(frozen=True)
class SampleBatch:
    """N samples in R^d, each carrying a Gaussian bump of shared bandwidth.

    The batch stands in for the density (1/N) sum_n N(x - X_n; bandwidth).
    """

    samples: np.ndarray
    bandwidth: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError("samples must be a nonempty N x d matrix")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def as_mixture(self) -> GaussianMixture:
        """The equally weighted mixture this batch represents."""
        comps = tuple(
            GaussianComponent(row, self.bandwidth) for row in self.samples
        )
        return GaussianMixture(np.full(self.n, 1.0 / self.n), comps)


def gauss_inner(a: GaussianComponent, b: GaussianComponent) -> float:
    """L2 inner product of two Gaussian bumps: N(mean_a - mean_b; v_a + v_b).

    Exact, with the full multivariate constant; no dimension scaling.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    v = a.variance + b.variance
    sq = float(np.sum(np.square(a.mean - b.mean)))
    return gauss_norm_const(a.dim, v) * math.exp(-sq / (2.0 * v))


def _pairwise_inner(p: GaussianMixture, q: GaussianMixture) -> np.ndarray:
    """Matrix of component inner products <p_i, q_j>."""
    mp, mq = p.means(), q.means()
    vp, vq = p.variances(), q.variances()
    vsum = vp[:, None] + vq[None, :]
    sq = np.sum(
        np.square(mp[:, None, :] - mq[None, :, :]), axis=-1
    )
    const = (2.0 * np.pi * vsum) ** (-0.5 * p.dim)
    return const * np.exp(-sq / (2.0 * vsum))


def _inner_with_weights(
    p: GaussianMixture, q: GaussianMixture, wp: np.ndarray, wq: np.ndarray
) -> float:
    """Double sum with caller-supplied (possibly unnormalized) weights."""
    return float(wp @ _pairwise_inner(p, q) @ wq)


def mixture_inner(p: GaussianMixture, q: GaussianMixture) -> float:
    """Closed-form L2 inner product of two discrete Gaussian mixtures."""
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    return _inner_with_weights(p, q, p.weights, q.weights)


def mixture_norm(p: GaussianMixture) -> float:
    """Squared L2 norm <p, p> of a mixture; strictly positive."""
    return mixture_inner(p, p)


def scaled_sq_dist(x: np.ndarray, xp: np.ndarray) -> np.ndarray:
    """Pairwise squared distances divided by the data dimension.

    Entry (n, k) = ||x_n - xp_k||^2 / d.  The division keeps exponents
    O(1) in high dimension, which is what makes the Gram matrices usable
    there.
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if xp.ndim == 1:
        xp = xp[:, None]
    if x.shape[1] != xp.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {xp.shape[1]}")
    d = x.shape[1]
    sq = (
        np.sum(np.square(x), axis=1)[:, None]
        + np.sum(np.square(xp), axis=1)[None, :]
        - 2.0 * (x @ xp.T)
    )
    np.maximum(sq, 0.0, out=sq)
    # Cancellation in the expansion leaves noise where rows coincide; pin
    # the self-distance diagonal to an exact zero.
    if x.shape == xp.shape and (x is xp or np.array_equal(x, xp)):
        np.fill_diagonal(sq, 0.0)
    return sq / d


def gauss_gram(
    x: np.ndarray,
    xp: np.ndarray,
    v_sum: float,
    constant_mode: str = EXP_ONLY,
) -> np.ndarray:
    """Gaussian Gram matrix exp(-scaled_sq_dist / (2 v_sum)).

    ``full_pdf`` mode multiplies by the d-dimensional normal constant with
    variance v_sum; ``exp_only`` keeps entries in (0, 1].
    """
    if not v_sum > 0:
        raise ValueError(f"v_sum must be positive, got {v_sum}")
    if constant_mode not in _CONSTANT_MODES:
        raise ValueError(f"unknown constant_mode {constant_mode!r}")
    sq = scaled_sq_dist(x, xp)
    g = np.exp(-sq / (2.0 * v_sum))
    if constant_mode == FULL_PDF:
        xa = np.asarray(x)
        d = xa.shape[1] if xa.ndim == 2 else 1
        g = g * gauss_norm_const(d, v_sum)
    return g


@dataclass(frozen=True)
class GramBundle:
    """The matrices a matrix cost consumes, with their scaling metadata.

    cross     : N x K Gram between data rows and model rows (P_FG)
    auto_rows : N x N data-side auto Gram (R_G), variance 2 * v_data
    auto_cols : K x K model-side auto Gram (R_F), variance 2 * v_model
    """

    sq_dist: np.ndarray
    cross: np.ndarray
    auto_rows: np.ndarray
    auto_cols: np.ndarray
    v_sum: float
    constant_mode: str = field(default=EXP_ONLY)


def build_gram_bundle(
    data: SampleBatch, model: SampleBatch, constant_mode: str = EXP_ONLY
) -> GramBundle:
    """Cross and auto Gram matrices for a data batch and a model batch."""
    if data.dim != model.dim:
        raise ValueError(f"dimension mismatch: {data.dim} vs {model.dim}")
    v_sum = data.bandwidth + model.bandwidth
    sq = scaled_sq_dist(data.samples, model.samples)
    cross = np.exp(-sq / (2.0 * v_sum))
    auto_rows = gauss_gram(
        data.samples, data.samples, 2.0 * data.bandwidth, constant_mode
    )
    auto_cols = gauss_gram(
        model.samples, model.samples, 2.0 * model.bandwidth, constant_mode
    )
    if constant_mode == FULL_PDF:
        cross = cross * gauss_norm_const(data.dim, v_sum)
    # Auto Grams are symmetric by construction up to rounding; enforce it
    # so downstream eigensolvers see exact symmetry.
    auto_rows = 0.5 * (auto_rows + auto_rows.T)
    auto_cols = 0.5 * (auto_cols + auto_cols.T)
    return GramBundle(sq, cross, auto_rows, auto_cols, v_sum, constant_mode)
