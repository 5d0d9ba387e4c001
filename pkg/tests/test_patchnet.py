import numpy as np
import pytest

from kmcost.patchnet import (
    BN_EVAL,
    BN_TRAIN,
    LabeledImages,
    PatchNetConfig,
    accuracy,
    build_patchnet,
    extract_patches,
    layers_forward,
    net_forward,
    net_forward_backward,
    softmax_cross_entropy,
    train_classifier,
)

from conftest import central_diff_grad, rel_grad_err


class TestExtractPatches:
    def test_pixel_level_rows_are_pixels(self, rng):
        img = rng.random((2, 4, 5, 1))
        patches = extract_patches(img, 1)
        assert patches.shape == (2, 20, 1)
        np.testing.assert_array_equal(patches[0, :, 0], img[0, :, :, 0].ravel())

    def test_constant_image_constant_rows(self):
        img = np.full((1, 4, 4, 1), 0.7)
        patches = extract_patches(img, 1)
        assert np.all(patches == 0.7)

    def test_center_patch_of_3x3_is_whole_image(self, rng):
        img = rng.random((1, 3, 3, 1))
        patches = extract_patches(img, 3)
        assert patches.shape == (1, 9, 9)
        np.testing.assert_array_equal(patches[0, 4], img[0, :, :, 0].ravel())

    def test_zero_padding_at_corner(self, rng):
        img = rng.random((1, 3, 3, 1))
        patches = extract_patches(img, 3)
        # position (0,0): the first row and column of the patch are padding
        corner = patches[0, 0].reshape(3, 3)
        assert np.all(corner[0, :] == 0) and np.all(corner[:, 0] == 0)
        np.testing.assert_array_equal(corner[1:, 1:], img[0, :2, :2, 0])

    def test_oversized_patch_rejected(self):
        with pytest.raises(ValueError):
            extract_patches(np.zeros((1, 4, 4, 1)), 5)


def tiny_net(patch_size=1, widths=(5, 4), n_classes=3, shape=(3, 3, 1), seed=0):
    # float64 so finite-difference comparisons resolve
    cfg = PatchNetConfig(
        patch_size=patch_size,
        layer_widths=widths,
        n_classes=n_classes,
        seed=seed,
        dtype="float64",
    )
    return build_patchnet(cfg, shape), cfg


class TestForward:
    def test_pre_bn_activations_in_unit_interval(self, rng):
        net, _ = tiny_net()
        patches = extract_patches(rng.random((4, 3, 3, 1)), 1)
        lay = net.layers[0]
        z = patches @ lay.a + lay.b
        act = np.exp(-np.square(z - lay.anchors[None]))
        assert np.all(act > 0) and np.all(act <= 1)

    def test_anchor_hit_gives_activation_one(self):
        net, _ = tiny_net(widths=(2,), shape=(1, 1, 1))
        lay = net.layers[0]
        lay.a[...] = 1.0
        lay.b[...] = 0.0
        lay.anchors[...] = 0.5
        patches = np.full((1, 1, 1), 0.5)
        z = patches @ lay.a + lay.b
        act = np.exp(-np.square(z - lay.anchors[None]))
        assert np.all(act == 1.0)

    def test_exp_of_mean_in_unit_interval(self, rng):
        net, _ = tiny_net()
        images = rng.random((6, 3, 3, 1))
        from kmcost.patchnet import _final_forward

        feats = layers_forward(net, extract_patches(images, 1), BN_EVAL)
        _, dist, expo = _final_forward(net, feats)
        assert np.all(expo > 0) and np.all(expo <= 1)

    def test_duplicate_images_identical_scores(self, rng):
        net, _ = tiny_net()
        img = rng.random((3, 3, 1))
        batch = np.stack([img, img])
        scores = net_forward(net, batch, BN_EVAL)
        np.testing.assert_array_equal(scores[0], scores[1])

    def test_eval_forward_batch_composition_invariant(self, rng):
        net, _ = tiny_net()
        imgs = rng.random((5, 3, 3, 1))
        full = net_forward(net, imgs, BN_EVAL)
        one = net_forward(net, imgs[2:3], BN_EVAL)
        np.testing.assert_allclose(full[2:3], one, atol=1e-10)

    def test_no_cross_position_interaction(self, rng):
        net, _ = tiny_net()
        patches = extract_patches(rng.random((2, 3, 3, 1)), 1)
        t = 4
        zeroed = np.zeros_like(patches)
        zeroed[:, t, :] = patches[:, t, :]
        full_feats = layers_forward(net, patches, BN_EVAL)
        part_feats = layers_forward(net, zeroed, BN_EVAL)
        np.testing.assert_array_equal(full_feats[:, t, :], part_feats[:, t, :])


class TestBackward:
    def probe_loss(self, rng, shape):
        probe = rng.normal(size=shape)

        def fn(scores):
            return float(np.sum(scores * probe)), probe

        return fn

    @pytest.mark.parametrize("bn_mode", [BN_EVAL, BN_TRAIN])
    def test_full_backward_matches_finite_differences(self, rng, bn_mode):
        net, _ = tiny_net(patch_size=3, widths=(4, 3), shape=(3, 3, 1), seed=2)
        images = rng.random((4, 3, 3, 1))
        loss_fn = self.probe_loss(rng, (4, 3))
        _, _, grads = net_forward_backward(net, images, loss_fn, bn_mode)
        params = net.params()
        for name in params:
            arr = params[name]

            def loss(flat, arr=arr):
                saved = arr.copy()
                arr[...] = flat.reshape(arr.shape)
                if bn_mode == BN_TRAIN:
                    # freeze running stats so eval of f is side-effect free
                    saved_stats = [
                        (l.run_mean.copy(), l.run_var.copy()) for l in net.layers
                    ]
                out, _, _ = net_forward_backward(
                    net, images, loss_fn, bn_mode
                )
                arr[...] = saved
                if bn_mode == BN_TRAIN:
                    for l, (m, v) in zip(net.layers, saved_stats):
                        l.run_mean[...] = m
                        l.run_var[...] = v
                return out

            num = central_diff_grad(loss, arr.ravel(), h=1e-6).reshape(arr.shape)
            assert rel_grad_err(grads[name], num) < 1e-4, name

    def test_softmax_cross_entropy_gradient(self, rng):
        scores = rng.normal(size=(6, 4))
        labels = rng.integers(0, 4, size=6)
        loss_fn = softmax_cross_entropy(labels)
        _, d_scores = loss_fn(scores)
        num = central_diff_grad(
            lambda flat: loss_fn(flat.reshape(6, 4))[0], scores.ravel(), h=1e-6
        ).reshape(6, 4)
        assert rel_grad_err(d_scores, num) < 1e-6


class TestTraining:
    def make_blob_dataset(self, n, rng, side=6, n_classes=3):
        # Class = which corner carries a bright blob; trivially learnable.
        images = rng.random((n, side, side, 1)) * 0.2
        labels = rng.integers(0, n_classes, size=n)
        spots = [(1, 1), (1, side - 2), (side - 2, 1)]
        for i, lab in enumerate(labels):
            r, c = spots[lab]
            images[i, r - 1 : r + 2, c - 1 : c + 2, 0] += 0.8
        return LabeledImages(np.clip(images, 0, 1), labels)

    def test_untrained_accuracy_near_chance(self, rng):
        data = self.make_blob_dataset(300, rng)
        net, _ = tiny_net(widths=(8, 8), shape=(6, 6, 1))
        acc = accuracy(net, data)
        assert abs(acc - 1 / 3) < 0.05 + 0.1  # chance with small-sample slack

    def test_learns_blob_classes(self, rng):
        train = self.make_blob_dataset(400, rng)
        test = self.make_blob_dataset(120, np.random.default_rng(5))
        cfg = PatchNetConfig(
            patch_size=1, layer_widths=(16, 16), n_classes=3, seed=3
        )
        res = train_classifier(train, test, cfg, epochs=8, lr=1e-2, batch_size=64)
        assert res.test_acc > 0.9
        assert res.train_acc >= res.test_acc - 0.05

    def test_training_deterministic(self, rng):
        train = self.make_blob_dataset(120, rng)
        test = self.make_blob_dataset(40, np.random.default_rng(5))
        cfg = PatchNetConfig(patch_size=1, layer_widths=(8,), n_classes=3, seed=3)
        accs = [
            train_classifier(train, test, cfg, epochs=2, lr=3e-3).test_acc
            for _ in range(2)
        ]
        assert accs[0] == accs[1]


class TestConfigValidation:
    def test_even_patch_rejected(self):
        with pytest.raises(ValueError):
            PatchNetConfig(patch_size=2)

    def test_empty_widths_rejected(self):
        with pytest.raises(ValueError):
            PatchNetConfig(layer_widths=())
