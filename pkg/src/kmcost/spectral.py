"""Spectral diagnostics for the Gram-matrix decomposition theory.

Numerical companions to the cost family: mass-weighted SVDs of discrete
density pairs, the nuclear-norm bound and its tightness, the half-variance
kernel factorization, the identity-function approximation built from the
cross-Gram SVD, Nystrom-extended singular functions on plotting grids, and
the whitened-residual orthonormality identity.

Everything here produces matrices and scalars for inspection; plotting is
left to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import RegularizationPolicy, SingularGramError, _jittered
from .gaussian_algebra import (
    EXP_ONLY,
    FULL_PDF,
    SampleBatch,
    gauss_gram,
    gauss_norm_const,
)


@dataclass(frozen=True)
class DiscreteDensityPair:
    """Two probability mass vectors on a shared support, plus a kernel width."""

    support: np.ndarray
    p_mass: np.ndarray
    q_mass: np.ndarray
    kernel_variance: float

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        if support.ndim == 1:
            support = support[:, None]
        p = np.asarray(self.p_mass, dtype=float)
        q = np.asarray(self.q_mass, dtype=float)
        m = support.shape[0]
        if p.shape != (m,) or q.shape != (m,):
            raise ValueError("masses must match the number of support points")
        for name, mass in (("p_mass", p), ("q_mass", q)):
            if np.any(mass < 0):
                raise ValueError(f"{name} has negative entries")
            if abs(mass.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} must sum to 1 within 1e-12")
        if not self.kernel_variance > 0:
            raise ValueError("kernel_variance must be positive")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "p_mass", p)
        object.__setattr__(self, "q_mass", q)


@dataclass(frozen=True)
class WeightedSvd:
    singular_values: np.ndarray
    left: np.ndarray
    right: np.ndarray


@dataclass(frozen=True)
class IdentityMap:
    """Grid evaluation of sum_k sigma_k f_hat_k(x') g_hat_k(x).

    diagonal_mass_ratio is the |entry| mass within one grid step of the
    diagonal over the total |entry| mass; it is the scalar used to compare
    how sharply the map concentrates on x == x'.
    """

    grid: np.ndarray
    matrix: np.ndarray
    diagonal_mass_ratio: float


def _sign_normalize(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip singular-vector pairs so each left vector leads with + sign.

    The first component of each left column whose magnitude exceeds a
    relative floor is made positive, and the matching right column is
    flipped with it so the factorization is preserved.
    """
    u = u.copy()
    v = v.copy()
    for j in range(u.shape[1]):
        col = u[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12 * max(1.0, np.abs(col).max()))[0]
        if nz.size and col[nz[0]] < 0:
            u[:, j] = -col
            v[:, j] = -v[:, j]
    return u, v


def weighted_svd(
    pair: DiscreteDensityPair, constant_mode: str = EXP_ONLY
) -> WeightedSvd:
    """SVD of diag(sqrt(p)) K diag(sqrt(q)) over the pair's support."""
    k = gauss_gram(pair.support, pair.support, pair.kernel_variance, constant_mode)
    a = np.sqrt(pair.p_mass)[:, None] * k * np.sqrt(pair.q_mass)[None, :]
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    u, v = _sign_normalize(u, vt.T)
    return WeightedSvd(s, u, v)


def variational_rescale(
    svd: WeightedSvd, mass: np.ndarray, side: str = "left", floor: float = 1e-12
) -> np.ndarray:
    """Divide singular vectors by sqrt(mass) to move from Lebesgue to
    probability-measure orthonormality; rows with mass <= floor are zeroed.
    """
    vecs = svd.left if side == "left" else svd.right
    mass = np.asarray(mass, dtype=float)
    out = np.zeros_like(vecs)
    keep = mass > floor
    out[keep] = vecs[keep] / np.sqrt(mass[keep])[:, None]
    return out


@dataclass(frozen=True)
class NuclearBoundReport:
    nuclear_norm: float
    bound: float
    tight: bool


def nuclear_bound_check(
    pair: DiscreteDensityPair,
    constant_mode: str = EXP_ONLY,
    tol: float = 1e-9,
) -> NuclearBoundReport:
    """Nuclear norm of the mass-weighted Gram against its K(x,x) bound.

    The bound is the kernel's diagonal value (1 in exp_only mode); it is
    attained exactly when the two masses coincide.  A violation beyond
    ``tol`` raises, since it would mean the weighted Gram lost positive
    semidefiniteness.
    """
    svd = weighted_svd(pair, constant_mode)
    nuclear = float(svd.singular_values.sum())
    d = pair.support.shape[1]
    bound = 1.0 if constant_mode == EXP_ONLY else gauss_norm_const(
        d, pair.kernel_variance
    )
    if nuclear > bound + tol:
        raise FloatingPointError(
            f"nuclear norm {nuclear} exceeds bound {bound} beyond tolerance"
        )
    tight = bool(np.array_equal(pair.p_mass, pair.q_mass))
    return NuclearBoundReport(nuclear, bound, tight)


@dataclass(frozen=True)
class FactorizationReport:
    max_abs_err: float


def _factorization_error(
    pts: np.ndarray, v: float, grid_lo: float, grid_hi: float, step: float
) -> float:
    """Raw Riemann-sum error of the half-variance identity, no grid gate."""
    grid = np.arange(grid_lo, grid_hi + 0.5 * step, step).reshape(-1, 1)
    k_half = gauss_gram(pts, grid, v, FULL_PDF)
    lhs = k_half @ k_half.T * step
    rhs = gauss_gram(pts, pts, 2.0 * v, FULL_PDF)
    return float(np.max(np.abs(lhs - rhs)))


def half_variance_factorization(
    eval_points: np.ndarray,
    v: float,
    grid_lo: float,
    grid_hi: float,
    step: float,
) -> FactorizationReport:
    """Riemann-sum check of N(x-x'; 2v) = int N(x-z; v) N(x'-z; v) dz in 1D.

    The quadrature grid must extend at least 8 sqrt(v) beyond the
    evaluation points and use a step no coarser than sqrt(v)/10; violating
    either makes the identity fail for grid reasons, so both are enforced.
    Inside those bounds the Gaussian trapezoid sum is accurate to the
    floating-point floor, far below the 1e-6 contract.
    """
    pts = np.asarray(eval_points, dtype=float).reshape(-1, 1)
    root_v = float(np.sqrt(v))
    if grid_lo > pts.min() - 8.0 * root_v or grid_hi < pts.max() + 8.0 * root_v:
        raise ValueError("quadrature grid must cover eval points +- 8 sqrt(v)")
    if step > root_v / 10.0:
        raise ValueError("quadrature step must be <= sqrt(v)/10")
    return FactorizationReport(_factorization_error(pts, v, grid_lo, grid_hi, step))


def _residual_grid(centers: np.ndarray, bandwidth: float, grid: np.ndarray):
    """Rows = one Gaussian residual per center, evaluated on grid points."""
    return gauss_gram(centers, grid.reshape(-1, 1), bandwidth, EXP_ONLY)


def identity_approximation(
    data: SampleBatch, model: SampleBatch, grid: np.ndarray
) -> IdentityMap:
    """Assemble the identity-function approximation on a 1D grid.

    The cross Gram P_FG = U S V^T gives rotated residual bundles
    f_hat = V^T f (model side) and g_hat = U^T g (data side); the map
    entry (i, j) is sum_k sigma_k f_hat_k(grid_i) g_hat_k(grid_j).
    """
    if data.dim != 1 or model.dim != 1:
        raise ValueError("identity approximation is defined for 1D batches")
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("empty grid")
    v_cross = data.bandwidth + model.bandwidth
    p = gauss_gram(data.samples, model.samples, v_cross, EXP_ONLY)
    u, s, vt = np.linalg.svd(p, full_matrices=False)
    f = _residual_grid(model.samples, model.bandwidth, grid)  # K x G
    g = _residual_grid(data.samples, data.bandwidth, grid)  # N x G
    f_hat = vt @ f  # r x G, model side
    g_hat = u.T @ g  # r x G, data side
    matrix = f_hat.T @ (s[:, None] * g_hat)  # G x G, rows = x', cols = x
    step = float(np.median(np.diff(np.sort(grid)))) if grid.size > 1 else np.inf
    near = np.abs(grid[:, None] - grid[None, :]) <= step * (1.0 + 1e-9)
    total = float(np.abs(matrix).sum())
    ratio = float(np.abs(matrix[near]).sum() / total) if total > 0 else 0.0
    return IdentityMap(grid, matrix, ratio)


@dataclass(frozen=True)
class GridSpec2D:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    nx: int
    ny: int

    def points(self) -> np.ndarray:
        xs = np.linspace(self.x_lo, self.x_hi, self.nx)
        ys = np.linspace(self.y_lo, self.y_hi, self.ny)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


@dataclass(frozen=True)
class SingularFunctionGrids:
    singular_values: np.ndarray
    left: np.ndarray  # (top_k, nx, ny), data-side functions
    right: np.ndarray  # (top_k, nx, ny), model-side functions


def singular_function_grid(
    data: SampleBatch,
    model: SampleBatch,
    grid2d: GridSpec2D,
    top_k: int,
    sigma_floor: float = 1e-8,
) -> SingularFunctionGrids:
    """Nystrom extension of the top singular vectors onto a 2D grid.

    left_k(x) = (1/sigma_k) sum_n U[n,k] g_n(x) and the mirrored form for
    the right functions; pairs with sigma below ``sigma_floor`` are cut to
    keep the 1/sigma extension finite.
    """
    if data.dim != 2 or model.dim != 2:
        raise ValueError("singular function grids are defined for 2D batches")
    v_cross = data.bandwidth + model.bandwidth
    p = gauss_gram(data.samples, model.samples, v_cross, EXP_ONLY)
    u, s, vt = np.linalg.svd(p, full_matrices=False)
    u, v = _sign_normalize(u, vt.T)
    rank = int(np.sum(s > sigma_floor))
    if top_k > rank:
        raise ValueError(
            f"top_k={top_k} exceeds usable rank {rank} (sigma floor {sigma_floor})"
        )
    pts = grid2d.points()
    g = gauss_gram(data.samples, pts, data.bandwidth, EXP_ONLY)  # N x G
    f = gauss_gram(model.samples, pts, model.bandwidth, EXP_ONLY)  # K x G
    shape = (grid2d.nx, grid2d.ny)
    left = np.stack(
        [(u[:, k] @ g / s[k]).reshape(shape) for k in range(top_k)]
    )
    right = np.stack(
        [(v[:, k] @ f / s[k]).reshape(shape) for k in range(top_k)]
    )
    return SingularFunctionGrids(s[:top_k].copy(), left, right)


def _inv_sqrt_psd(r: np.ndarray, what: str) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (r + r.T))
    if np.any(vals <= 0):
        raise SingularGramError(f"{what} not positive definite in eigh")
    return (vecs / np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True)
class OrthonormalityReport:
    max_dev: float


def whitened_orthonormality_check(
    data: SampleBatch,
    model: SampleBatch,
    reg: RegularizationPolicy = RegularizationPolicy(),
) -> OrthonormalityReport:
    """Deviation from identity of the whitened singular-vector Grams.

    Whiten the cross Gram with the jittered inverse square roots, take its
    SVD, then measure how far U^T (R^-1/2 R R^-1/2) U and the V analog are
    from the identity.  In exact arithmetic both are identity matrices.
    """
    bundle_v = data.bandwidth + model.bandwidth
    p = gauss_gram(data.samples, model.samples, bundle_v, EXP_ONLY)
    rg = gauss_gram(data.samples, data.samples, 2.0 * data.bandwidth, EXP_ONLY)
    rf = gauss_gram(model.samples, model.samples, 2.0 * model.bandwidth, EXP_ONLY)
    rg_j, _ = _jittered(0.5 * (rg + rg.T), reg.jitter_rel)
    rf_j, _ = _jittered(0.5 * (rf + rf.T), reg.jitter_rel)
    wg = _inv_sqrt_psd(rg_j, "data auto Gram")
    wf = _inv_sqrt_psd(rf_j, "model auto Gram")
    white = wg @ p @ wf
    u, _, vt = np.linalg.svd(white, full_matrices=False)
    devs = []
    for vecs, w, r in ((u, wg, rg_j), (vt.T, wf, rf_j)):
        gram = vecs.T @ (w @ r @ w) @ vecs
        devs.append(np.max(np.abs(gram - np.eye(gram.shape[0]))))
    return OrthonormalityReport(float(max(devs)))
