"""Named self-checks bundling the library's core numerical invariants.

Each check is a (name, callable) pair returning (passed, detail); the CLI
``check_suite`` experiment runs them all, reports one line per check, and
exits nonzero if any fail.  Exceptions inside a check are reported as
failures with the error text, never swallowed.

These overlap the pytest suite on purpose: they are the shippable,
dependency-free verification path (quadrature oracles, finite-difference
gradient probes, bound and orthonormality identities).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import mdn, patchnet
from .costs import (
    MM_LOGDET,
    MM_TRACE,
    MM_TRACE_NO_RG,
    CostKind,
    RegularizationPolicy,
    batch_pp_norm,
    evaluate,
    matrix_matrix_cost,
    scalar_cost,
    svd_cost,
    vector_matrix_cost,
)
from .gaussian_algebra import (
    GaussianComponent,
    GaussianMixture,
    SampleBatch,
    build_gram_bundle,
    gauss_gram,
    gauss_inner,
    mixture_inner,
    mixture_norm,
)
from .spectral import (
    DiscreteDensityPair,
    half_variance_factorization,
    nuclear_bound_check,
    variational_rescale,
    weighted_svd,
    whitened_orthonormality_check,
)


@dataclass(frozen=True)
class CheckConfig:
    seed: int = 20240811
    jitter_rel: float = 1e-6
    svd_gap_floor: float = 1e-8

    @property
    def reg(self) -> RegularizationPolicy:
        return RegularizationPolicy(self.jitter_rel, self.svd_gap_floor)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _quad_inner_1d(f, g, lo=-8.0, hi=8.0, step=0.01):
    xs = np.arange(lo, hi + 0.5 * step, step)[:, None]
    return float(np.trapezoid(f(xs) * g(xs), dx=step))


def _fd_grad(fn, x, h=1e-5):
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


def _grad_err(analytic, numeric):
    floor = max(1e-8, 1e-2 * float(np.max(np.abs(numeric), initial=0.0)))
    scale = np.maximum(np.abs(numeric), np.maximum(np.abs(analytic), floor))
    return float(np.max(np.abs(analytic - numeric) / scale))


def _random_mixture(rng, n_comp):
    comps = tuple(
        GaussianComponent(rng.uniform(-2, 2, size=1), rng.uniform(0.2, 1.0))
        for _ in range(n_comp)
    )
    return GaussianMixture(rng.uniform(0.2, 1.0, size=n_comp), comps)


def _well_conditioned_instance(rng, reg, n=5, k=4, d=2):
    while True:
        v = float(rng.uniform(0.05, 0.4))
        data = SampleBatch(rng.normal(size=(n, d)), v)
        model = SampleBatch(rng.normal(size=(k, d)), v)
        rf = gauss_gram(model.samples, model.samples, 2 * v)
        if np.linalg.eigvalsh(rf).min() > 1e-3:
            return data, model


def _cost_grad_check(cost_fn, cfg, trials=5, tol=1e-4):
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(trials):
        data, model = _well_conditioned_instance(rng, cfg.reg)
        rep = cost_fn(data, model)
        if rep.diagnostics.min_singular_gap is not None and (
            rep.diagnostics.min_singular_gap <= 1e-4
        ):
            continue

        def val(flat):
            batch = SampleBatch(flat.reshape(model.samples.shape), model.bandwidth)
            return cost_fn(data, batch).value

        num = _fd_grad(val, model.samples.ravel()).reshape(model.samples.shape)
        worst = max(worst, _grad_err(rep.grad_centers, num))
    passed = worst < tol
    return passed, f"max rel grad err {worst:.2e} (tol {tol:g})"


def check_quadrature_gauss_inner(cfg):
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(10):
        a = GaussianComponent(rng.uniform(-1, 1, size=1), rng.uniform(0.2, 1))
        b = GaussianComponent(rng.uniform(-1, 1, size=1), rng.uniform(0.2, 1))
        oracle = _quad_inner_1d(a.pdf, b.pdf)
        worst = max(worst, abs(gauss_inner(a, b) - oracle))
    return worst < 1e-6, f"max |closed form - quadrature| = {worst:.2e}"


def check_quadrature_mixture_inner(cfg):
    rng = np.random.default_rng(cfg.seed + 1)
    worst = 0.0
    for _ in range(10):
        p = _random_mixture(rng, 2)
        q = _random_mixture(rng, 3)
        worst = max(worst, abs(mixture_inner(p, q) - _quad_inner_1d(p.pdf, q.pdf)))
    return worst < 1e-6, f"max |closed form - quadrature| = {worst:.2e}"


def check_quadrature_mixture_norm(cfg):
    rng = np.random.default_rng(cfg.seed + 2)
    worst = 0.0
    for _ in range(10):
        p = _random_mixture(rng, 3)
        worst = max(worst, abs(mixture_norm(p) - _quad_inner_1d(p.pdf, p.pdf)))
    return worst < 1e-6, f"max |closed form - quadrature| = {worst:.2e}"


def check_cauchy_schwarz_mixtures(cfg):
    rng = np.random.default_rng(cfg.seed + 3)
    worst = -np.inf
    for _ in range(200):
        p = _random_mixture(rng, int(rng.integers(1, 4)))
        q = _random_mixture(rng, int(rng.integers(1, 4)))
        slack = mixture_inner(p, q) ** 2 - mixture_norm(p) * mixture_norm(q)
        worst = max(worst, slack)
    return worst <= 1e-12, f"max <p,q>^2 - <p,p><q,q> = {worst:.2e}"


def check_gram_symmetric_psd(cfg):
    rng = np.random.default_rng(cfg.seed + 4)
    for _ in range(50):
        n = int(rng.integers(2, 12))
        batch = SampleBatch(rng.normal(size=(n, 2)), rng.uniform(0.01, 1.0))
        other = SampleBatch(rng.normal(size=(n + 1, 2)), rng.uniform(0.01, 1.0))
        bundle = build_gram_bundle(batch, other)
        for r in (bundle.auto_rows, bundle.auto_cols):
            if np.max(np.abs(r - r.T)) > 1e-12:
                return False, "auto Gram not symmetric"
            if np.linalg.eigvalsh(r).min() < -1e-10 * np.trace(r):
                return False, "auto Gram not PSD"
    return True, "50 random bundles symmetric and PSD"


def check_gradient_scalar_cost(cfg):
    return _cost_grad_check(lambda d, m: scalar_cost(d, m), cfg)


def check_gradient_vector_matrix_cost(cfg):
    return _cost_grad_check(lambda d, m: vector_matrix_cost(d, m, cfg.reg), cfg)


def check_gradient_matrix_matrix_trace(cfg):
    return _cost_grad_check(
        lambda d, m: matrix_matrix_cost(d, m, cfg.reg, MM_TRACE), cfg
    )


def check_gradient_matrix_matrix_trace_no_rg(cfg):
    return _cost_grad_check(
        lambda d, m: matrix_matrix_cost(d, m, cfg.reg, MM_TRACE_NO_RG), cfg
    )


def check_gradient_svd_cost(cfg):
    return _cost_grad_check(lambda d, m: svd_cost(d, m, cfg.reg), cfg)


def check_bound_scalar_cost(cfg):
    rng = np.random.default_rng(cfg.seed + 5)
    for _ in range(200):
        data, model = _well_conditioned_instance(rng, cfg.reg)
        if scalar_cost(data, model).value > batch_pp_norm(data) + 1e-9:
            return False, "scalar cost exceeded batch <p,p>"
    return True, "200 instances below batch <p,p> + 1e-9"


def check_bound_vector_matrix_cost(cfg):
    rng = np.random.default_rng(cfg.seed + 6)
    for i in range(200):
        data, model = _well_conditioned_instance(rng, cfg.reg)
        if i == 0:
            # rank-deficient R_F by duplicated centers; jitter must carry it
            dup = np.vstack([model.samples[:1], model.samples[:1], model.samples])
            model = SampleBatch(dup, model.bandwidth)
        if vector_matrix_cost(data, model, cfg.reg).value > batch_pp_norm(data) + 1e-9:
            return False, "vector-matrix cost exceeded batch <p,p>"
    return True, "200 instances (incl. rank-deficient R_F) below bound"


def check_bound_svd_nuclear(cfg):
    rng = np.random.default_rng(cfg.seed + 7)
    for _ in range(500):
        n = int(rng.integers(2, 8))
        v = float(rng.uniform(0.02, 0.5))
        data = SampleBatch(rng.normal(size=(n, 2)), v)
        model = SampleBatch(rng.normal(size=(n, 2)), v)
        if svd_cost(data, model, cfg.reg).value > n + 1e-9:
            return False, "nuclear norm exceeded N"
    return True, "500 square instances below N + 1e-9"


def check_svd_permutation_identity(cfg):
    rng = np.random.default_rng(cfg.seed + 8)
    pts = rng.normal(size=(8, 2))
    data = SampleBatch(pts, 0.02)
    model = SampleBatch(pts[rng.permutation(8)], 0.02)
    value = svd_cost(data, model, cfg.reg).value
    return abs(value - 8.0) <= 1e-9, f"permuted-batch nuclear norm {value:.12f} vs 8"


def check_cost_permutation_invariance(cfg):
    rng = np.random.default_rng(cfg.seed + 9)
    data, model = _well_conditioned_instance(rng, cfg.reg, n=6, k=5)
    data_p = SampleBatch(data.samples[rng.permutation(6)], data.bandwidth)
    model_p = SampleBatch(model.samples[rng.permutation(5)], model.bandwidth)
    for kind in CostKind:
        base = evaluate(kind, data, model, cfg.reg).value
        perm = evaluate(kind, data_p, model_p, cfg.reg).value
        if abs(base - perm) > 1e-12:
            return False, f"{kind.value} changed under row shuffles"
    return True, "all five kinds invariant under row shuffles"


def check_cost_far_model_vanishes(cfg):
    v = 0.01
    data = SampleBatch(np.array([[0.0], [0.1]]), v)
    off = 100 * math.sqrt(v)
    far = SampleBatch(np.array([[off], [off + 0.1]]), v)
    for kind in (CostKind.SCALAR, CostKind.VECTOR_MATRIX,
                 CostKind.MATRIX_MATRIX_TRACE, CostKind.SVD_NUCLEAR):
        if evaluate(kind, data, far, cfg.reg).value >= 1e-8:
            return False, f"{kind.value} does not vanish at 100 sqrt(v)"
    return True, "costs below 1e-8 at distance 100 sqrt(v)"


def check_cost_peak_at_coincidence(cfg):
    rng = np.random.default_rng(cfg.seed + 10)
    pts = np.linspace(-2, 2, 8)[:, None]
    data = SampleBatch(pts, 0.01)
    coincident = SampleBatch(pts.copy(), 0.01)
    for kind in CostKind:
        at_match = evaluate(kind, data, coincident, cfg.reg).value
        for _ in range(100):
            shifted = SampleBatch(pts + rng.uniform(0.3, 2.0), 0.01)
            if evaluate(kind, data, shifted, cfg.reg).value > at_match:
                return False, f"{kind.value} beat its coincident value"
    return True, "coincident batches maximize all kinds over 100 shifts"


def check_weighted_svd_eigen_agreement(cfg):
    rng = np.random.default_rng(cfg.seed + 11)
    support = rng.normal(size=(7, 1))
    p = rng.uniform(0.1, 1, size=7)
    p /= p.sum()
    pair = DiscreteDensityPair(support, p, p.copy(), 0.2)
    svd = weighted_svd(pair)
    k = gauss_gram(support, support, 0.2)
    a = np.sqrt(p)[:, None] * k * np.sqrt(p)[None, :]
    eig = np.sort(np.linalg.eigvalsh(a))[::-1]
    dev = float(np.max(np.abs(svd.singular_values - eig)))
    return dev < 1e-10, f"singular values vs eigenvalues deviate {dev:.2e}"


def check_variational_rescale_orthonormality(cfg):
    rng = np.random.default_rng(cfg.seed + 12)
    support = rng.normal(size=(8, 1))
    p = rng.uniform(0.1, 1, size=8)
    p /= p.sum()
    q = rng.uniform(0.1, 1, size=8)
    q /= q.sum()
    pair = DiscreteDensityPair(support, p, q, 0.1)
    svd = weighted_svd(pair)
    left_hat = variational_rescale(svd, p, "left")
    gram = left_hat.T @ np.diag(p) @ left_hat
    dev = float(np.max(np.abs(gram - np.eye(gram.shape[0]))))
    return dev < 1e-8, f"probability-measure orthonormality deviates {dev:.2e}"


def check_nuclear_bound_mass_weighted(cfg):
    rng = np.random.default_rng(cfg.seed + 13)
    for _ in range(100):
        m = int(rng.integers(2, 10))
        support = rng.normal(size=(m, 1))
        p = rng.uniform(0.05, 1, size=m)
        q = rng.uniform(0.05, 1, size=m)
        pair = DiscreteDensityPair(
            support, p / p.sum(), q / q.sum(), float(rng.uniform(0.05, 0.5))
        )
        rep = nuclear_bound_check(pair)
        if rep.nuclear_norm > rep.bound + 1e-9:
            return False, "mass-weighted nuclear norm exceeded K(x,x)"
    return True, "100 random pairs below K(x,x) + 1e-9"


def check_half_variance_factorization(cfg):
    rep = half_variance_factorization(
        np.array([-1.0, 0.0, 1.0]), 0.5, -8.0, 8.0, 0.01
    )
    return rep.max_abs_err < 1e-6, f"max identity error {rep.max_abs_err:.2e}"


def check_whitened_orthonormality(cfg):
    rng = np.random.default_rng(cfg.seed + 14)
    data = SampleBatch(rng.normal(size=(18, 2)), 0.05)
    model = SampleBatch(rng.normal(size=(11, 2)), 0.05)
    rep = whitened_orthonormality_check(data, model, cfg.reg)
    return rep.max_dev <= 1e-8, f"max deviation from identity {rep.max_dev:.2e}"


def check_mdn_pipeline_gradient(cfg):
    rng = np.random.default_rng(cfg.seed + 15)
    model = mdn.build_mdn(3, 2, (8, 8), seed=cfg.seed)
    noise = rng.normal(size=(4, 3))
    data = SampleBatch(rng.normal(size=(4, 2)) * 0.3, 0.05)
    centers, cache = mdn.forward_with_cache(model, noise)
    rep = evaluate(CostKind.SVD_NUCLEAR, data, SampleBatch(centers, 0.05), cfg.reg)
    grads = mdn.backward(model, cache, rep.grad_centers)
    arr = model.weights[0]

    def val(flat):
        saved = arr.copy()
        arr[...] = flat.reshape(arr.shape)
        out = evaluate(
            CostKind.SVD_NUCLEAR, data,
            SampleBatch(mdn.forward(model, noise), 0.05), cfg.reg,
        ).value
        arr[...] = saved
        return out

    num = _fd_grad(val, arr.ravel()).reshape(arr.shape)
    err = _grad_err(grads["w0"], num)
    return err < 1e-4, f"pipeline grad err {err:.2e}"


def check_patchnet_gradient(cfg):
    rng = np.random.default_rng(cfg.seed + 16)
    net_cfg = patchnet.PatchNetConfig(
        patch_size=1, layer_widths=(4, 3), n_classes=3, seed=cfg.seed,
        dtype="float64",
    )
    net = patchnet.build_patchnet(net_cfg, (3, 3, 1))
    images = rng.random((4, 3, 3, 1))
    probe = rng.normal(size=(4, 3))

    def loss_fn(scores):
        return float(np.sum(scores * probe)), probe

    _, _, grads = patchnet.net_forward_backward(net, images, loss_fn, patchnet.BN_EVAL)
    arr = net.layers[0].a

    def val(flat):
        saved = arr.copy()
        arr[...] = flat.reshape(arr.shape)
        out, _, _ = patchnet.net_forward_backward(
            net, images, loss_fn, patchnet.BN_EVAL
        )
        arr[...] = saved
        return out

    num = _fd_grad(val, arr.ravel(), h=1e-6).reshape(arr.shape)
    err = _grad_err(grads["l0.a"], num)
    return err < 1e-4, f"patch layer grad err {err:.2e}"


def check_patchnet_no_position_interaction(cfg):
    rng = np.random.default_rng(cfg.seed + 17)
    net_cfg = patchnet.PatchNetConfig(
        patch_size=1, layer_widths=(5, 4), n_classes=3, seed=cfg.seed,
        dtype="float64",
    )
    net = patchnet.build_patchnet(net_cfg, (3, 3, 1))
    patches = patchnet.extract_patches(rng.random((2, 3, 3, 1)), 1)
    t = 4
    zeroed = np.zeros_like(patches)
    zeroed[:, t, :] = patches[:, t, :]
    full = patchnet.layers_forward(net, patches, patchnet.BN_EVAL)
    part = patchnet.layers_forward(net, zeroed, patchnet.BN_EVAL)
    same = np.array_equal(full[:, t, :], part[:, t, :])
    return same, "position features exact under zeroing others" if same else (
        "cross-position leakage detected"
    )


def check_prior_determinism(cfg):
    spec = mdn.PriorSpec("hybrid", 8, hybrid_split=3)
    a = mdn.sample_prior(spec, 16, cfg.seed)
    b = mdn.sample_prior(spec, 16, cfg.seed)
    return np.array_equal(a, b), "identical draws for identical seeds"


ALL_CHECKS = [
    ("quadrature_gauss_inner", check_quadrature_gauss_inner),
    ("quadrature_mixture_inner", check_quadrature_mixture_inner),
    ("quadrature_mixture_norm", check_quadrature_mixture_norm),
    ("cauchy_schwarz_mixtures", check_cauchy_schwarz_mixtures),
    ("gram_symmetric_psd", check_gram_symmetric_psd),
    ("gradient_scalar_cost", check_gradient_scalar_cost),
    ("gradient_vector_matrix_cost", check_gradient_vector_matrix_cost),
    ("gradient_matrix_matrix_trace", check_gradient_matrix_matrix_trace),
    ("gradient_matrix_matrix_trace_no_rg", check_gradient_matrix_matrix_trace_no_rg),
    ("gradient_svd_cost", check_gradient_svd_cost),
    ("bound_scalar_cost", check_bound_scalar_cost),
    ("bound_vector_matrix_cost", check_bound_vector_matrix_cost),
    ("bound_svd_nuclear", check_bound_svd_nuclear),
    ("svd_permutation_identity", check_svd_permutation_identity),
    ("cost_permutation_invariance", check_cost_permutation_invariance),
    ("cost_far_model_vanishes", check_cost_far_model_vanishes),
    ("cost_peak_at_coincidence", check_cost_peak_at_coincidence),
    ("weighted_svd_eigen_agreement", check_weighted_svd_eigen_agreement),
    ("variational_rescale_orthonormality", check_variational_rescale_orthonormality),
    ("nuclear_bound_mass_weighted", check_nuclear_bound_mass_weighted),
    ("half_variance_factorization", check_half_variance_factorization),
    ("whitened_orthonormality", check_whitened_orthonormality),
    ("mdn_pipeline_gradient", check_mdn_pipeline_gradient),
    ("patchnet_gradient", check_patchnet_gradient),
    ("patchnet_no_position_interaction", check_patchnet_no_position_interaction),
    ("prior_determinism", check_prior_determinism),
]


def run_all(cfg: CheckConfig | None = None) -> list[CheckResult]:
    cfg = cfg or CheckConfig()
    results = []
    for name, fn in ALL_CHECKS:
        try:
            passed, detail = fn(cfg)
        except Exception as exc:  # report, never skip
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), str(detail)))
    return results
