"""Mixture-output network trained by maximizing a kernelized matrix cost.

A small tanh MLP maps prior noise draws to K mixture centers; each train
step samples fresh noise, forwards it, evaluates the configured cost
against a data batch through `kmcost.costs`, and ascends the analytic
gradient back through the network.  The implied model density is the
uniform-weight mixture of Gaussian bumps of bandwidth v at the centers.

Everything is seeded: noise via per-step SeedSequences, data via the
dataset spec's generator, so a full `fit` is reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import optim
from .costs import CostKind, RegularizationPolicy, evaluate
from .gaussian_algebra import GaussianComponent, GaussianMixture, SampleBatch

PRIOR_KINDS = ("uniform", "gaussian", "hybrid")


@dataclass(frozen=True)
class PriorSpec:
    """Noise prior feeding the center network."""

    kind: str = "uniform"
    dim: int = 10
    hybrid_split: int | None = None

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.kind == "hybrid":
            split = self.dim // 2 if self.hybrid_split is None else self.hybrid_split
            if not 0 < split < self.dim:
                raise ValueError("hybrid_split must lie strictly inside dim")
            object.__setattr__(self, "hybrid_split", split)


def sample_prior(spec: PriorSpec, k: int, seed) -> np.ndarray:
    """K noise rows; uniform on [0,1), standard normal, or a dim split."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    if spec.kind == "uniform":
        return rng.random((k, spec.dim))
    if spec.kind == "gaussian":
        return rng.standard_normal((k, spec.dim))
    u = rng.random((k, spec.hybrid_split))
    g = rng.standard_normal((k, spec.dim - spec.hybrid_split))
    return np.concatenate([u, g], axis=1)


@dataclass
class MdnModel:
    """Affine stack with tanh between layers; last layer stays affine."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("one bias per weight matrix required")
        for i in range(len(self.weights) - 1):
            if self.weights[i].shape[1] != self.weights[i + 1].shape[0]:
                raise ValueError("consecutive layer shapes do not compose")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ValueError("bias shape mismatch")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def copy(self) -> "MdnModel":
        return MdnModel([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def build_mdn(
    input_dim: int,
    output_dim: int,
    hidden: tuple[int, ...] = (128, 128, 128),
    seed: int = 0,
    final_scale: float = 1.0,
) -> MdnModel:
    """Tanh-gain fan-in init; final_scale spreads the initial centers.

    At the small bandwidths these costs run at, training only has signal
    where generated centers overlap data bumps, so the init must scatter
    centers across the data scale rather than pinch them near zero.
    """
    rng = np.random.default_rng(seed)
    dims = (input_dim, *hidden, output_dim)
    weights, biases = [], []
    for i in range(len(dims) - 1):
        scale = (5.0 / 3.0) / math.sqrt(dims[i])
        if i == len(dims) - 2:
            scale = final_scale / math.sqrt(dims[i])
        weights.append(rng.normal(0.0, scale, size=(dims[i], dims[i + 1])))
        biases.append(np.zeros(dims[i + 1]))
    return MdnModel(weights, biases)


def forward(model: MdnModel, noise: np.ndarray) -> np.ndarray:
    """Map noise rows to center rows."""
    centers, _ = forward_with_cache(model, noise)
    return centers


def forward_with_cache(model: MdnModel, noise: np.ndarray):
    noise = np.asarray(noise, dtype=float)
    if noise.ndim != 2 or noise.shape[1] != model.input_dim:
        raise ValueError(
            f"noise must be K x {model.input_dim}, got {noise.shape}"
        )
    h = noise
    cache = [h]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if i != last:
            h = np.tanh(h)
        cache.append(h)
    return h, cache


def backward(model: MdnModel, cache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients for d(cost)/d(centers) flowing back through tanh."""
    grads = {}
    g = np.asarray(grad_out, dtype=float)
    last = len(model.weights) - 1
    for i in range(last, -1, -1):
        if i != last:
            g = g * (1.0 - np.square(cache[i + 1]))  # tanh'(z) via its output
        pre = cache[i]
        grads[f"w{i}"] = pre.T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        if i > 0:
            g = g @ model.weights[i].T
    return grads


@dataclass(frozen=True)
class LearningRateSchedule:
    base: float = 1e-3
    decay: float = 1.0  # per-step multiplicative factor
    warmup_steps: int = 0  # linear ramp tames the first adaptive kicks

    def at(self, step: int) -> float:
        lr = self.base * self.decay**step
        if self.warmup_steps > 0 and step < self.warmup_steps:
            lr *= (step + 1) / self.warmup_steps
        return lr


@dataclass(frozen=True)
class TrainConfig:
    cost: CostKind = CostKind.SVD_NUCLEAR
    bandwidth: float = 0.001
    batch_n: int = 256
    centers_k: int = 256
    steps: int = 2000
    lr: LearningRateSchedule = field(default_factory=LearningRateSchedule)
    seed: int = 0
    optimizer: str = optim.ADAPTIVE_MOMENTS
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float | None = 10.0  # global-norm clip; None disables
    prior: PriorSpec = field(default_factory=PriorSpec)
    reg: RegularizationPolicy = field(default_factory=RegularizationPolicy)

    def __post_init__(self):
        if min(self.batch_n, self.centers_k, self.steps) < 1:
            raise ValueError("counts must be >= 1")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


class TrainingDiverged(RuntimeError):
    """Non-finite cost; carries the trace up to the failing step."""

    def __init__(self, step: int, trace: np.ndarray):
        super().__init__(f"non-finite cost at step {step}")
        self.step = step
        self.trace = trace


@dataclass
class TrainState:
    opt: optim.OptimizerState
    step: int = 0


def init_train_state(model: MdnModel, cfg: TrainConfig) -> TrainState:
    return TrainState(optim.init_optimizer(cfg.optimizer, model.params()))


def _prior_seed(cfg: TrainConfig, step: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=cfg.seed, spawn_key=(step,))


def train_step(
    model: MdnModel,
    data_batch: np.ndarray,
    cfg: TrainConfig,
    state: TrainState,
) -> dict:
    """One ascent step on the configured cost; returns monitors."""
    noise = sample_prior(cfg.prior, cfg.centers_k, _prior_seed(cfg, state.step))
    centers, cache = forward_with_cache(model, noise)
    data = SampleBatch(data_batch, cfg.bandwidth)
    gen = SampleBatch(centers, cfg.bandwidth)
    report = evaluate(cfg.cost, data, gen, cfg.reg)
    if not math.isfinite(report.value):
        raise TrainingDiverged(state.step, np.array([]))
    grads = backward(model, cache, -report.grad_centers)  # ascend
    grad_norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if cfg.grad_clip is not None and grad_norm > cfg.grad_clip:
        scale = cfg.grad_clip / grad_norm
        for g in grads.values():
            g *= scale
    lr = cfg.lr.at(state.step)
    params = model.params()
    optim.apply_update(
        state.opt,
        params,
        grads,
        lr,
        momentum=cfg.momentum,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
    )
    state.step += 1
    return {"cost_value": report.value, "grad_norm": grad_norm}


DATASET_KINDS = ("gauss_mixture_10", "two_moons", "single_gaussian", "custom_mixture")


@dataclass(frozen=True)
class ToyDatasetSpec:
    """Seeded 2D/1D toy data generators for the fitting experiments."""

    kind: str = "gauss_mixture_10"
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")


def _spread_means(rng: np.random.Generator, n: int, lo: float, hi: float,
                  min_sep: float, dim: int = 2) -> np.ndarray:
    """Rejection-sample component means with a minimum separation."""
    means = [rng.uniform(lo, hi, size=dim)]
    while len(means) < n:
        cand = rng.uniform(lo, hi, size=dim)
        if min(np.linalg.norm(cand - m) for m in means) >= min_sep:
            means.append(cand)
    return np.stack(means)


class ToyDataset:
    """Sampler with, when Gaussian, the true mixture for scoring."""

    def __init__(self, spec: ToyDatasetSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        p = spec.params
        self.mixture: GaussianMixture | None = None
        if spec.kind == "gauss_mixture_10":
            var = float(p.get("component_variance", 0.01))
            means = _spread_means(
                rng, 10, p.get("low", -1.0), p.get("high", 1.0),
                p.get("min_separation", 0.45),
            )
            comps = tuple(GaussianComponent(m, var) for m in means)
            self.mixture = GaussianMixture(np.full(10, 0.1), comps)
        elif spec.kind == "single_gaussian":
            mean = np.asarray(p.get("mean", [0.0, 0.0]), dtype=float)
            var = float(p.get("variance", 0.04))
            self.mixture = GaussianMixture(
                np.array([1.0]), (GaussianComponent(mean, var),)
            )
        elif spec.kind == "custom_mixture":
            means = np.asarray(p["means"], dtype=float)
            variances = np.asarray(p["variances"], dtype=float)
            weights = np.asarray(p.get("weights", np.ones(len(means))), dtype=float)
            comps = tuple(
                GaussianComponent(m, v) for m, v in zip(means, variances)
            )
            self.mixture = GaussianMixture(weights, comps)
        else:  # two_moons
            self.noise = float(p.get("noise", 0.05))
        self._rng = np.random.default_rng(np.random.SeedSequence(
            entropy=spec.seed, spawn_key=(1,)
        ))

    def sample(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = self._rng if rng is None else rng
        if self.mixture is not None:
            return self.mixture.sample(n, rng)
        # Two interleaved half circles, unit radius, second moon shifted.
        t = rng.random(n) * math.pi
        upper = rng.random(n) < 0.5
        x = np.where(upper, np.cos(t), 1.0 - np.cos(t))
        y = np.where(upper, np.sin(t), 0.5 - np.sin(t))
        pts = np.stack([x, y], axis=1)
        return pts + self.noise * rng.standard_normal((n, 2))


def mode_coverage(centers: np.ndarray, mixture: GaussianMixture) -> float:
    """Fraction of mixture components with a center within 2 sigma."""
    covered = 0
    for comp in mixture.components:
        dists = np.linalg.norm(centers - comp.mean, axis=1)
        if np.min(dists) <= 2.0 * math.sqrt(comp.variance):
            covered += 1
    return covered / len(mixture.components)


@dataclass
class FitResult:
    model: MdnModel
    cost_trace: np.ndarray
    mode_coverage: float
    final_centers: np.ndarray


def fit(model: MdnModel, dataset: ToyDatasetSpec, cfg: TrainConfig) -> FitResult:
    """Run cfg.steps ascent steps over fresh batches; score mode coverage."""
    ds = ToyDataset(dataset)
    state = init_train_state(model, cfg)
    trace = np.empty(cfg.steps)
    for step in range(cfg.steps):
        batch = ds.sample(cfg.batch_n)
        try:
            rec = train_step(model, batch, cfg, state)
        except TrainingDiverged as exc:
            raise TrainingDiverged(step, trace[:step].copy()) from exc
        trace[step] = rec["cost_value"]
    noise = sample_prior(cfg.prior, cfg.centers_k, _prior_seed(cfg, cfg.steps))
    centers = forward(model, noise)
    coverage = mode_coverage(centers, ds.mixture) if ds.mixture is not None else math.nan
    return FitResult(model, trace, coverage, centers)
