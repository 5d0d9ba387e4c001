"""Gaussian-product function approximator for image classification.

Each pixel (or zero-padded patch) position t is processed independently by
a stack of Gaussian layers: an affine map shared across positions, a
per-position anchor per output unit, the exponential of the negative
squared difference, and batch normalization with per-(position, unit)
statistics.  Positions interact only in the final layer, where per-class
anchor fields turn the mean squared distance over positions into one
bounded exponential feature per class, followed by an affine map and a
trainable global scale.

The forward/backward passes are written out by hand (numpy only): caches
keep the affine inputs and the pre-exponential differences per layer and
recompute the cheap pieces during the backward pass to bound memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import optim

BN_TRAIN = "train"
BN_EVAL = "eval"


@dataclass(frozen=True)
class PatchNetConfig:
    patch_size: int = 1
    layer_widths: tuple[int, ...] = (64, 64, 64)
    n_classes: int = 10
    alpha: float = 1.0
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.9
    anchor_scale: float = 0.5
    gamma_init: float = 0.1
    seed: int = 0
    # float32 is plenty for training and halves the memory traffic of the
    # (batch, positions, width) tensors; gradient checks build in float64.
    dtype: str = "float32"

    def __post_init__(self):
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise ValueError("patch_size must be odd and >= 1")
        if any(w < 1 for w in self.layer_widths) or not self.layer_widths:
            raise ValueError("layer widths must be >= 1")
        if not self.bn_epsilon > 0:
            raise ValueError("bn_epsilon must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        object.__setattr__(self, "layer_widths", tuple(self.layer_widths))


def extract_patches(images: np.ndarray, patch_size: int) -> np.ndarray:
    """Flattened stride-1 patches with zero padding, one row per position.

    images: (B, H, W, C) or (H, W, C); returns (B, H*W, patch_size^2 * C)
    with the leading batch axis kept (added for a single image).
    """
    imgs = np.asarray(images, dtype=float)
    single = imgs.ndim == 3
    if single:
        imgs = imgs[None]
    if imgs.ndim != 4:
        raise ValueError("images must be (B, H, W, C)")
    b, h, w, c = imgs.shape
    if patch_size > min(h, w):
        raise ValueError(f"patch_size {patch_size} exceeds image size {h}x{w}")
    half = (patch_size - 1) // 2
    padded = np.pad(imgs, ((0, 0), (half, half), (half, half), (0, 0)))
    slices = np.empty((b, h, w, patch_size * patch_size, c))
    idx = 0
    for di in range(patch_size):
        for dj in range(patch_size):
            slices[:, :, :, idx, :] = padded[:, di : di + h, dj : dj + w, :]
            idx += 1
    out = slices.reshape(b, h * w, patch_size * patch_size * c)
    return out[0] if single else out


@dataclass
class GaussLayer:
    """Affine + per-position scalar anchors + exp + batch norm."""

    a: np.ndarray  # (w_in, w_out), shared across positions
    b: np.ndarray  # (w_out,)
    anchors: np.ndarray  # (T, w_out)
    gamma: np.ndarray  # (T, w_out)
    beta: np.ndarray  # (T, w_out)
    run_mean: np.ndarray  # (T, w_out), eval statistics
    run_var: np.ndarray


@dataclass
class PatchNet:
    config: PatchNetConfig
    image_shape: tuple[int, int, int]  # (H, W, C)
    layers: list[GaussLayer]
    final_anchors: np.ndarray  # (n_classes, T, w_last)
    final_a: np.ndarray  # (n_classes, n_classes)
    final_b: np.ndarray  # (n_classes,)
    alpha: np.ndarray  # scalar, kept 0-d so the optimizer updates in place

    @property
    def positions(self) -> int:
        return self.image_shape[0] * self.image_shape[1]

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, lay in enumerate(self.layers):
            out[f"l{i}.a"] = lay.a
            out[f"l{i}.b"] = lay.b
            out[f"l{i}.anchors"] = lay.anchors
            out[f"l{i}.gamma"] = lay.gamma
            out[f"l{i}.beta"] = lay.beta
        out["final.anchors"] = self.final_anchors
        out["final.a"] = self.final_a
        out["final.b"] = self.final_b
        out["alpha"] = self.alpha
        return out


def build_patchnet(
    cfg: PatchNetConfig, image_shape: tuple[int, int, int]
) -> PatchNet:
    h, w, c = image_shape
    t = h * w
    dt = np.dtype(cfg.dtype)
    rng = np.random.default_rng(cfg.seed)
    w_in = cfg.patch_size * cfg.patch_size * c
    layers = []
    for w_out in cfg.layer_widths:
        layers.append(
            GaussLayer(
                a=rng.normal(0.0, 1.0 / math.sqrt(w_in), size=(w_in, w_out)).astype(dt),
                b=np.zeros(w_out, dtype=dt),
                anchors=rng.normal(0.0, cfg.anchor_scale, size=(t, w_out)).astype(dt),
                gamma=np.full((t, w_out), cfg.gamma_init, dtype=dt),
                beta=np.zeros((t, w_out), dtype=dt),
                run_mean=np.zeros((t, w_out), dtype=dt),
                run_var=np.ones((t, w_out), dtype=dt),
            )
        )
        w_in = w_out
    final_anchors = rng.normal(0.0, 0.01, size=(cfg.n_classes, t, w_in)).astype(dt)
    return PatchNet(
        config=cfg,
        image_shape=(h, w, c),
        layers=layers,
        final_anchors=final_anchors,
        final_a=np.eye(cfg.n_classes, dtype=dt),
        final_b=np.zeros(cfg.n_classes, dtype=dt),
        alpha=np.array(float(cfg.alpha), dtype=dt),
    )


def layer_forward(
    layer: GaussLayer,
    y_prev: np.ndarray,
    bn_mode: str,
    bn_epsilon: float,
    bn_momentum: float,
    cache: list | None = None,
) -> np.ndarray:
    """One Gaussian layer on (B, T, w_in) features, no cross-position mixing.

    The (B, T, width) tensors dominate the runtime, so the affine map runs
    as a single flattened GEMM and the elementwise chain reuses buffers.
    """
    if bn_mode not in (BN_TRAIN, BN_EVAL):
        raise ValueError(f"unknown bn_mode {bn_mode!r}")
    b_sz, t, w_in = y_prev.shape
    w_out = layer.a.shape[1]
    diff = (y_prev.reshape(-1, w_in) @ layer.a).reshape(b_sz, t, w_out)
    diff += layer.b
    diff -= layer.anchors
    act = np.square(diff)
    np.negative(act, out=act)
    np.exp(act, out=act)
    if bn_mode == BN_TRAIN:
        mu = act.mean(axis=0)
        var = act.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + bn_epsilon)
        layer.run_mean *= bn_momentum
        layer.run_mean += (1.0 - bn_momentum) * mu
        layer.run_var *= bn_momentum
        layer.run_var += (1.0 - bn_momentum) * var
    else:
        mu = layer.run_mean
        inv_std = 1.0 / np.sqrt(layer.run_var + bn_epsilon)
    xhat = act - mu
    xhat *= inv_std
    out = xhat * layer.gamma
    out += layer.beta
    if cache is not None:
        cache.append((y_prev, diff, act, xhat, inv_std))
    return out


def layer_backward(
    layer: GaussLayer,
    cached,
    d_out: np.ndarray,
    bn_mode: str,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Gradients of one layer; returns (d_input, parameter grads)."""
    y_prev, diff, act, xhat, inv_std = cached
    d_gamma = np.einsum("btu,btu->tu", d_out, xhat)
    d_beta = np.sum(d_out, axis=0)
    d_xhat = d_out * layer.gamma
    if bn_mode == BN_TRAIN:
        b = d_out.shape[0]
        s1 = np.sum(d_xhat, axis=0)
        s2 = np.einsum("btu,btu->tu", d_xhat, xhat)
        d_act = d_xhat
        d_act -= s1 / b
        d_act -= xhat * (s2 / b)
        d_act *= inv_std
    else:
        d_act = d_xhat
        d_act *= inv_std
    # d/dz of exp(-(z - W)^2): act * (-2 diff); anchors get the mirror sign
    d_z = d_act
    d_z *= act
    d_z *= diff
    d_z *= -2.0
    d_anchors = -np.sum(d_z, axis=0)
    w_in = y_prev.shape[-1]
    w_out = d_z.shape[-1]
    dz2 = d_z.reshape(-1, w_out)
    d_a = y_prev.reshape(-1, w_in).T @ dz2
    d_b = np.sum(dz2, axis=0)
    d_y = (dz2 @ layer.a.T).reshape(y_prev.shape)
    grads = {
        "a": d_a,
        "b": d_b,
        "anchors": d_anchors,
        "gamma": d_gamma,
        "beta": d_beta,
    }
    return d_y, grads


def layers_forward(
    net: PatchNet, patches: np.ndarray, bn_mode: str, cache: list | None = None
) -> np.ndarray:
    y = patches
    for layer in net.layers:
        y = layer_forward(
            layer, y, bn_mode, net.config.bn_epsilon, net.config.bn_momentum, cache
        )
    return y


def _final_forward(net: PatchNet, feats: np.ndarray):
    """Per-class exponential of the mean squared distance, then affine."""
    b = feats.shape[0]
    t = feats.shape[1]
    flat = feats.reshape(b, -1)
    wf = net.final_anchors.reshape(net.config.n_classes, -1)
    dist = (
        np.sum(flat * flat, axis=1)[:, None]
        + np.sum(wf * wf, axis=1)[None, :]
        - 2.0 * (flat @ wf.T)
    ) / t
    np.maximum(dist, 0.0, out=dist)
    expo = np.exp(-dist)
    scores = net.alpha * (expo @ net.final_a + net.final_b)
    return scores, dist, expo


def _net_patches(net: PatchNet, images: np.ndarray) -> np.ndarray:
    patches = extract_patches(images, net.config.patch_size)
    return patches.astype(net.config.dtype, copy=False)


def net_forward(
    net: PatchNet, images: np.ndarray, bn_mode: str = BN_EVAL
) -> np.ndarray:
    """Class scores for a batch of images (B, H, W, C) scaled to [0, 1]."""
    feats = layers_forward(net, _net_patches(net, images), bn_mode)
    scores, _, _ = _final_forward(net, feats)
    return scores


def net_forward_backward(
    net: PatchNet, images: np.ndarray, d_scores_fn, bn_mode: str = BN_TRAIN
):
    """Forward plus gradients for all parameters.

    ``d_scores_fn(scores) -> (loss, d_scores)`` supplies the loss layer, so
    the same machinery serves training (softmax cross-entropy) and the
    finite-difference checks (arbitrary probes).
    """
    patches = _net_patches(net, images)
    cache: list = []
    feats = layers_forward(net, patches, bn_mode, cache)
    scores, dist, expo = _final_forward(net, feats)
    loss, d_scores = d_scores_fn(scores)

    pre_alpha = expo @ net.final_a + net.final_b
    grads: dict[str, np.ndarray] = {}
    grads["alpha"] = np.array(np.sum(d_scores * pre_alpha))
    d_pre = float(net.alpha) * d_scores
    grads["final.a"] = expo.T @ d_pre
    grads["final.b"] = np.sum(d_pre, axis=0)
    d_expo = d_pre @ net.final_a.T
    d_dist = -expo * d_expo
    t = feats.shape[1]
    wf = net.final_anchors
    d_feats = (2.0 / t) * (
        feats * np.sum(d_dist, axis=1)[:, None, None]
        - np.tensordot(d_dist, wf, axes=(1, 0))
    )
    grads["final.anchors"] = (2.0 / t) * (
        wf * np.sum(d_dist, axis=0)[:, None, None]
        - np.tensordot(d_dist.T, feats, axes=(1, 0))
    )
    d_y = d_feats
    for i in range(len(net.layers) - 1, -1, -1):
        d_y, layer_grads = layer_backward(net.layers[i], cache[i], d_y, bn_mode)
        for key, val in layer_grads.items():
            grads[f"l{i}.{key}"] = val
    return loss, scores, grads


def softmax_cross_entropy(labels: np.ndarray):
    """Loss closure over integer labels for `net_forward_backward`."""
    labels = np.asarray(labels)

    def fn(scores: np.ndarray):
        b = scores.shape[0]
        shifted = scores - scores.max(axis=1, keepdims=True)
        logz = np.log(np.sum(np.exp(shifted), axis=1))
        loss = float(np.mean(logz - shifted[np.arange(b), labels]))
        probs = np.exp(shifted - logz[:, None])
        probs[np.arange(b), labels] -= 1.0
        return loss, probs / b

    return fn


@dataclass(frozen=True)
class LabeledImages:
    images: np.ndarray  # (N, H, W, C) floats in [0, 1]
    labels: np.ndarray  # (N,) integer classes

    def __post_init__(self):
        images = np.asarray(self.images, dtype=float)
        if images.ndim == 3:
            images = images[..., None]
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.shape[0] != labels.shape[0]:
            raise ValueError("images and labels disagree on N")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.labels.shape[0]


def accuracy(net: PatchNet, data: LabeledImages, batch: int = 256) -> float:
    hits = 0
    for lo in range(0, data.n, batch):
        scores = net_forward(net, data.images[lo : lo + batch], BN_EVAL)
        hits += int(np.sum(np.argmax(scores, axis=1) == data.labels[lo : lo + batch]))
    return hits / data.n


@dataclass
class ClassifierResult:
    model: PatchNet
    train_acc: float
    test_acc: float
    history: list  # per-epoch dicts: epoch, loss, train_acc, test_acc


def train_classifier(
    train: LabeledImages,
    test: LabeledImages,
    cfg: PatchNetConfig,
    epochs: int = 8,
    lr: float = 3e-3,
    lr_decay: float = 0.85,
    batch_size: int = 128,
    eval_train_subset: int = 2000,
) -> ClassifierResult:
    """Minimize softmax cross-entropy over epochs with adaptive moments."""
    net = build_patchnet(cfg, train.images.shape[1:])
    params = net.params()
    opt = optim.init_optimizer(optim.ADAPTIVE_MOMENTS, params)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(17,)))
    history = []
    for epoch in range(epochs):
        order = rng.permutation(train.n)
        epoch_lr = lr * lr_decay**epoch
        losses = []
        for lo in range(0, train.n, batch_size):
            idx = order[lo : lo + batch_size]
            loss, _, grads = net_forward_backward(
                net,
                train.images[idx],
                softmax_cross_entropy(train.labels[idx]),
                BN_TRAIN,
            )
            if not math.isfinite(loss):
                raise FloatingPointError(f"training diverged at epoch {epoch}")
            optim.apply_update(opt, params, grads, epoch_lr)
            losses.append(loss)
        sub = min(eval_train_subset, train.n)
        train_acc = accuracy(
            net, LabeledImages(train.images[:sub], train.labels[:sub])
        )
        test_acc = accuracy(net, test)
        history.append(
            {
                "epoch": epoch,
                "loss": float(np.mean(losses)),
                "train_acc": train_acc,
                "test_acc": test_acc,
            }
        )
    final_train = accuracy(net, train)
    return ClassifierResult(net, final_train, history[-1]["test_acc"], history)
