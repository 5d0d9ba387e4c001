"""The four kernelized matrix costs with analytic gradients.

Each cost compares a data batch against a batch of model centers through
Gaussian Gram matrices and returns both its value and the exact gradient
with respect to the model centers:

* scalar:             <p,q>^2 / <q,q>                      (bounded by <p,p>)
* vector-matrix:      P^T R^-1 P with P the mean cross-Gram column sums
* matrix-matrix:      Trace of the whitened Schur-complement product, with a
                      data-whitening-free variant and a log-det variant
* svd / nuclear norm: sum of singular values of the cross Gram

Costs always use ``exp_only`` Gram matrices: with batch-size normalization
the dropped pdf constants cancel out of the optimization, and entries stay
in (0, 1] regardless of dimension.

Gradients are derived by hand through the Gram entries; every formula here
is checked against central finite differences in the test suite.  The chain
rule through a Gram entry G = exp(-||x_n - x'_k||^2 / (2 d v)) is

    dG/dx'_k = G * (x_n - x'_k) / (d v),

shared by `_cross_grad` (data-model Gram) and `_auto_grad` (model-model
Gram, two occurrences of each center).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .gaussian_algebra import EXP_ONLY, SampleBatch, build_gram_bundle, gauss_gram


class SingularGramError(RuntimeError):
    """A Gram matrix could not be inverted/factorized after jitter."""


class CostKind(enum.Enum):
    SCALAR = "scalar"
    VECTOR_MATRIX = "vector_matrix"
    MATRIX_MATRIX_TRACE = "matrix_matrix_trace"
    MATRIX_MATRIX_LOGDET = "matrix_matrix_logdet"
    SVD_NUCLEAR = "svd_nuclear"


# Matrix-matrix variants; `trace_no_rg` drops the data-side whitening,
# which is the form quantified in the shift-sweep experiment.
MM_TRACE = "trace"
MM_TRACE_NO_RG = "trace_no_rg"
MM_LOGDET = "logdet"


@dataclass(frozen=True)
class RegularizationPolicy:
    """Relative jitter for Gram inversions and the SVD degeneracy floor."""

    jitter_rel: float = 1e-6
    svd_gap_floor: float = 1e-8

    def __post_init__(self):
        if self.jitter_rel < 0:
            raise ValueError("jitter_rel must be >= 0")
        if not self.svd_gap_floor > 0:
            raise ValueError("svd_gap_floor must be positive")


@dataclass(frozen=True)
class CostDiagnostics:
    jitter_used: float = 0.0
    min_singular_gap: float | None = None


@dataclass(frozen=True)
class CostReport:
    """Cost value plus the gradient with respect to the model centers.

    ``value`` is always the quantity a trainer maximizes; the log-det
    variant stores the negated log-det expression so that contract holds
    for every kind.
    """

    kind: CostKind
    value: float
    grad_centers: np.ndarray
    diagnostics: CostDiagnostics = field(default_factory=CostDiagnostics)

    def __post_init__(self):
        if not np.all(np.isfinite(self.grad_centers)):
            raise FloatingPointError("non-finite gradient entries")


def _check_batches(data: SampleBatch, model: SampleBatch):
    if data.dim != model.dim:
        raise ValueError(f"dimension mismatch: {data.dim} vs {model.dim}")


def _cross_grad(
    x: np.ndarray, xp: np.ndarray, gram: np.ndarray, adj: np.ndarray, v_sum: float
) -> np.ndarray:
    """Map an adjoint on the cross Gram to a gradient on the model rows."""
    d = x.shape[1]
    w = adj * gram
    return (w.T @ x - w.sum(axis=0)[:, None] * xp) / (d * v_sum)


def _auto_grad(
    xp: np.ndarray, gram: np.ndarray, adj: np.ndarray, v_sum: float
) -> np.ndarray:
    """Map an adjoint on the model auto Gram to a gradient on its rows."""
    d = xp.shape[1]
    s = (adj + adj.T) * gram
    return (s @ xp - s.sum(axis=1)[:, None] * xp) / (d * v_sum)


def _jittered(r: np.ndarray, jitter_rel: float) -> tuple[np.ndarray, float]:
    """Add relative jitter jitter_rel * (trace/K) * I before factorizing."""
    k = r.shape[0]
    jit = jitter_rel * (np.trace(r) / k)
    if jit == 0.0:
        return r, 0.0
    return r + jit * np.eye(k), float(jit)


def _spd_solve(r: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        c = np.linalg.cholesky(r)
    except np.linalg.LinAlgError as exc:
        raise SingularGramError(f"{what} is not positive definite: {exc}") from exc
    y = np.linalg.solve(c, b)
    return np.linalg.solve(c.T, y)


def _spd_inverse(r: np.ndarray, what: str) -> np.ndarray:
    inv = _spd_solve(r, np.eye(r.shape[0]), what)
    return 0.5 * (inv + inv.T)


def _spd_logdet(r: np.ndarray, what: str) -> float:
    try:
        c = np.linalg.cholesky(r)
    except np.linalg.LinAlgError as exc:
        raise SingularGramError(f"{what} is not positive definite: {exc}") from exc
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def batch_pp_norm(data: SampleBatch) -> float:
    """exp_only batch estimate of <p, p>: mean of the data auto Gram.

    This is the upper bound the scalar and vector-matrix costs live under.
    """
    r = gauss_gram(data.samples, data.samples, 2.0 * data.bandwidth, EXP_ONLY)
    return float(r.mean())


def scalar_cost(data: SampleBatch, model: SampleBatch) -> CostReport:
    """Squared cross inner product over the model norm, <p,q>^2 / <q,q>."""
    _check_batches(data, model)
    x, xp = data.samples, model.samples
    v_cross = data.bandwidth + model.bandwidth
    v_auto = 2.0 * model.bandwidth
    p = gauss_gram(x, xp, v_cross, EXP_ONLY)
    r = gauss_gram(xp, xp, v_auto, EXP_ONLY)
    a = float(p.mean())  # (1/NK) sum = batch <p, q>
    b = float(r.mean())  # (1/K^2) sum = batch <q, q>
    value = a * a / b
    n, k = p.shape
    # Quotient rule: d(a^2/b) = (2a/b) da - (a/b)^2 db, with uniform
    # adjoints 1/(NK) and 1/K^2 from the two means.
    adj_p = np.full_like(p, (2.0 * a / b) / (n * k))
    adj_r = np.full_like(r, -((a / b) ** 2) / (k * k))
    grad = _cross_grad(x, xp, p, adj_p, v_cross) + _auto_grad(xp, r, adj_r, v_auto)
    return CostReport(CostKind.SCALAR, value, grad)


def vector_matrix_cost(
    data: SampleBatch,
    model: SampleBatch,
    reg: RegularizationPolicy = RegularizationPolicy(),
) -> CostReport:
    """Optimal-linear-prediction value P^T R^-1 P of the data density.

    P_k is the mean over data rows of the cross Gram column k (the batch
    estimate of the expectation of residual k under the data density).
    """
    _check_batches(data, model)
    x, xp = data.samples, model.samples
    v_cross = data.bandwidth + model.bandwidth
    v_auto = 2.0 * model.bandwidth
    p = gauss_gram(x, xp, v_cross, EXP_ONLY)
    r = gauss_gram(xp, xp, v_auto, EXP_ONLY)
    r = 0.5 * (r + r.T)
    p_vec = p.mean(axis=0)
    r_j, jit = _jittered(r, reg.jitter_rel)
    try:
        u = np.linalg.solve(r_j, p_vec)
    except np.linalg.LinAlgError as exc:
        raise SingularGramError(f"model auto Gram singular after jitter: {exc}") from exc
    value = float(p_vec @ u)
    n = p.shape[0]
    # d(P^T R^-1 P) = 2 u^T dP - u^T dR u with u = R^-1 P.
    adj_p = np.tile(2.0 * u / n, (n, 1))
    adj_r = -np.outer(u, u)
    grad = _cross_grad(x, xp, p, adj_p, v_cross) + _auto_grad(xp, r, adj_r, v_auto)
    return CostReport(
        CostKind.VECTOR_MATRIX, value, grad, CostDiagnostics(jitter_used=jit)
    )


def matrix_matrix_cost(
    data: SampleBatch,
    model: SampleBatch,
    reg: RegularizationPolicy = RegularizationPolicy(),
    variant: str = MM_TRACE,
) -> CostReport:
    """Schur-complement trace cost (or its log-det / no-R_G variants).

    trace:       Trace(R_G^-1 P R_F^-1 P^T) with P the N x K cross Gram
    trace_no_rg: Trace(P R_F^-1 P^T), data-side whitening dropped
    logdet:      -(logdet R_FG - logdet R_F - logdet R_G), stored negated so
                 that maximizing the reported value minimizes the log-det
                 expression
    """
    _check_batches(data, model)
    if variant not in (MM_TRACE, MM_TRACE_NO_RG, MM_LOGDET):
        raise ValueError(f"unknown variant {variant!r}")
    bundle = build_gram_bundle(data, model, EXP_ONLY)
    x, xp = data.samples, model.samples
    p, rf, rg = bundle.cross, bundle.auto_cols, bundle.auto_rows
    v_cross = bundle.v_sum
    v_auto = 2.0 * model.bandwidth
    rf_j, jit = _jittered(rf, reg.jitter_rel)
    b = _spd_inverse(rf_j, "model auto Gram")
    pb = p @ b  # N x K

    if variant == MM_LOGDET:
        # logdet R_FG - logdet R_F - logdet R_G reduces via the Schur
        # complement to logdet(R_G - P R_F^-1 P^T) - logdet R_G.
        rg_j, _ = _jittered(rg, reg.jitter_rel)
        s = rg_j - pb @ p.T
        s = 0.5 * (s + s.T)
        # The complement collapses toward 0 as the batches coincide; jitter
        # on the R_G scale keeps the log-det finite there.
        jit_s = reg.jitter_rel * (np.trace(rg_j) / rg_j.shape[0])
        s_j = s + jit_s * np.eye(s.shape[0])
        value = _spd_logdet(rg_j, "data auto Gram") - _spd_logdet(
            s_j, "Schur complement"
        )
        t = _spd_inverse(s_j, "Schur complement")
        adj_p = 2.0 * (t @ pb)
        adj_rf = -(pb.T @ t @ pb)
        kind = CostKind.MATRIX_MATRIX_LOGDET
    else:
        if variant == MM_TRACE:
            rg_j, _ = _jittered(rg, reg.jitter_rel)
            a_p = _spd_solve(rg_j, p, "data auto Gram")  # R_G^-1 P
        else:
            a_p = p
        value = float(np.sum(a_p * pb))
        apb = a_p @ b
        adj_p = 2.0 * apb
        adj_rf = -(pb.T @ a_p @ b)
        kind = CostKind.MATRIX_MATRIX_TRACE

    adj_rf = 0.5 * (adj_rf + adj_rf.T)
    grad = _cross_grad(x, xp, p, adj_p, v_cross) + _auto_grad(
        xp, rf, adj_rf, v_auto
    )
    return CostReport(kind, float(value), grad, CostDiagnostics(jitter_used=jit))


def svd_cost(
    data: SampleBatch,
    model: SampleBatch,
    reg: RegularizationPolicy = RegularizationPolicy(),
) -> CostReport:
    """Nuclear norm of the cross Gram: sum of its singular values.

    No batch-size normalization is applied, so the value of an N x N
    Hermitian instance (model a permutation of the data) is exactly N.
    The gradient of the nuclear norm is U V^T from the thin SVD; at
    degenerate or vanishing singular values this is a subgradient and the
    diagnostics record how close the spectrum is to such a point.
    """
    _check_batches(data, model)
    x, xp = data.samples, model.samples
    v_cross = data.bandwidth + model.bandwidth
    p = gauss_gram(x, xp, v_cross, EXP_ONLY)
    try:
        u, s, vt = np.linalg.svd(p, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - gesdd fallback
        raise SingularGramError(f"SVD did not converge: {exc}") from exc
    value = float(s.sum())
    # Smallest spacing in the spectrum, counting the gap from the smallest
    # singular value down to zero (both are non-differentiable points).
    gaps = np.diff(s) * -1.0
    min_gap = float(min(gaps.min() if gaps.size else np.inf, s[-1]))
    adj_p = u @ vt
    grad = _cross_grad(x, xp, p, adj_p, v_cross)
    return CostReport(
        CostKind.SVD_NUCLEAR,
        value,
        grad,
        CostDiagnostics(jitter_used=0.0, min_singular_gap=min_gap),
    )


def _frobenius_cost(data: SampleBatch, model: SampleBatch) -> CostReport:
    """Trace(P P^T) baseline; kept only to demonstrate why it fails.

    Unlike the nuclear norm it is blind to rank: collapsing all centers
    onto the densest point scores as well as matching the data.  Not part
    of `CostKind` and never dispatched by `evaluate`.
    """
    _check_batches(data, model)
    x, xp = data.samples, model.samples
    v_cross = data.bandwidth + model.bandwidth
    p = gauss_gram(x, xp, v_cross, EXP_ONLY)
    value = float(np.sum(p * p))
    grad = _cross_grad(x, xp, p, 2.0 * p, v_cross)
    return CostReport(CostKind.SVD_NUCLEAR, value, grad)


def evaluate(
    kind: CostKind,
    data: SampleBatch,
    model: SampleBatch,
    reg: RegularizationPolicy = RegularizationPolicy(),
) -> CostReport:
    """Uniform dispatch over the cost family."""
    if kind is CostKind.SCALAR:
        return scalar_cost(data, model)
    if kind is CostKind.VECTOR_MATRIX:
        return vector_matrix_cost(data, model, reg)
    if kind is CostKind.MATRIX_MATRIX_TRACE:
        return matrix_matrix_cost(data, model, reg, MM_TRACE)
    if kind is CostKind.MATRIX_MATRIX_LOGDET:
        return matrix_matrix_cost(data, model, reg, MM_LOGDET)
    if kind is CostKind.SVD_NUCLEAR:
        return svd_cost(data, model, reg)
    raise ValueError(f"unknown cost kind {kind!r}")
