import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from featcont.augment import (
    MixedBatch,
    anneal_lambda,
    augmented_epoch,
    cut_bounds,
    cutmix,
    draw_lambda,
    mixup,
)
from featcont.network import Conv2D, Dense, Flatten, MaxPool, ReLU, init_network, loss_and_grads
from featcont.rng import KeyedRng


def toy_batch(n=8, seed=0, shape=(3, 28, 28)):
    rng = np.random.default_rng(seed)
    return rng.random((n, *shape)), rng.integers(0, 10, n)


# ---------------------------------------------------------------------------
# lambda annealing

def test_anneal_lambda_endpoints():
    for lam in (0.1, 0.5, 0.93):
        assert anneal_lambda(lam, 0.0) == lam
        assert anneal_lambda(lam, 1.0) == 1.0


def test_anneal_lambda_point_value():
    assert anneal_lambda(0.4, 0.5) == (1.0 - 0.5) * 0.4 + 0.5


@given(st.floats(0.001, 0.999), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_anneal_lambda_monotone_both_arguments(lam, a1, a2):
    lo_a, hi_a = sorted((a1, a2))
    assert anneal_lambda(lam, lo_a) <= anneal_lambda(lam, hi_a)
    assert lam <= anneal_lambda(lam, lo_a) <= 1.0


@given(st.floats(0.001, 0.999), st.floats(0.001, 0.999), st.floats(0.0, 1.0))
def test_anneal_lambda_monotone_in_lambda(l1, l2, alpha):
    lo, hi = sorted((l1, l2))
    assert anneal_lambda(lo, alpha) <= anneal_lambda(hi, alpha)


# ---------------------------------------------------------------------------
# mixup

def test_mixup_lambda_one_is_identity():
    images, labels = toy_batch()
    perm = np.roll(np.arange(8), 1)
    out = mixup(images, labels, perm, 1.0)
    np.testing.assert_array_equal(out.images, images)
    assert np.array_equal(out.y_a, labels)
    assert np.all(out.lam == 1.0)


def test_mixup_self_pairing_keeps_image():
    images, labels = toy_batch()
    out = mixup(images, labels, np.arange(8), 0.5)
    np.testing.assert_allclose(out.images, images, atol=1e-15)
    assert np.array_equal(out.y_a, out.y_b)


def test_mixup_pixel_arithmetic():
    images = np.zeros((2, 3, 4, 4))
    images[1] = 1.0
    out = mixup(images, np.array([0, 1]), np.array([1, 0]), 0.25)
    # item 0: 0.25 * 0 + 0.75 * 1
    assert np.allclose(out.images[0], 0.75, atol=1e-15)
    assert np.allclose(out.images[1], 0.25, atol=1e-15)


# ---------------------------------------------------------------------------
# cutmix

def test_cut_bounds_interior_exact_quarter_area():
    y0, y1, x0, x1, lam_eff = cut_bounds(14, 14, 0.75, 28, 28)
    assert (y1 - y0, x1 - x0) == (14, 14)
    assert lam_eff == 1.0 - 196 / 784


def test_cut_bounds_lambda_one_empty_patch():
    y0, y1, x0, x1, lam_eff = cut_bounds(10, 10, 1.0, 28, 28)
    assert (y1 - y0) * (x1 - x0) == 0
    assert lam_eff == 1.0


def test_cut_bounds_lambda_zero_center_covers_image():
    y0, y1, x0, x1, lam_eff = cut_bounds(14, 14, 0.0, 28, 28)
    assert (y0, y1, x0, x1) == (0, 28, 0, 28)
    assert lam_eff == 0.0


def test_cut_bounds_clipping_accounted():
    y0, y1, x0, x1, lam_eff = cut_bounds(2, 2, 0.75, 28, 28)
    assert (y0, x0) == (0, 0)
    assert (y1, x1) == (9, 9)
    assert lam_eff == 1.0 - 81 / 784


def test_cutmix_copies_patch_and_reports_exact_fraction():
    images, labels = toy_batch(n=4)
    perm = np.array([1, 2, 3, 0])
    out = cutmix(images, labels, perm, 0.6, KeyedRng(5))
    changed = (out.images != images).any(axis=(0, 1))
    area = changed.sum()
    assert np.allclose(out.lam, 1.0 - area / 784) or area == 0
    # inside the rectangle the partner image shows through exactly
    ys, xs = np.where(changed)
    if len(ys):
        np.testing.assert_array_equal(
            out.images[:, :, ys.min() : ys.max() + 1, xs.min() : xs.max() + 1],
            images[perm][:, :, ys.min() : ys.max() + 1, xs.min() : xs.max() + 1],
        )


@given(st.floats(0.0, 1.0), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_cutmix_lambda_eff_matches_unmixed_fraction(lam, key):
    images, labels = toy_batch(n=3)
    out = cutmix(images, labels, np.array([1, 2, 0]), lam, KeyedRng(key))
    same_as_self = np.isclose(out.images, images).all(axis=(0, 1))
    same_as_partner = np.isclose(out.images, images[[1, 2, 0]]).all(axis=(0, 1))
    assert same_as_partner.sum() + same_as_self.sum() >= 784  # patch + rest tile the image
    assert out.lam[0] == 1.0 - (~same_as_self).sum() / 784 or same_as_partner.sum() > (~same_as_self).sum()
    assert 0.0 <= out.lam[0] <= 1.0


def test_augmented_images_stay_in_unit_interval():
    images, labels = toy_batch(n=6, seed=3)
    for mb in (
        mixup(images, labels, np.roll(np.arange(6), 2), 0.3),
        cutmix(images, labels, np.roll(np.arange(6), 2), 0.3, KeyedRng(1)),
    ):
        assert mb.images.min() >= 0.0 and mb.images.max() <= 1.0


# ---------------------------------------------------------------------------
# epoch wrapper

def batches_of(n_batches, batch=8, seed=0):
    rng = np.random.default_rng(seed)
    return [
        (rng.random((batch, 3, 28, 28)), rng.integers(0, 10, batch)) for _ in range(n_batches)
    ]


def test_alpha_zero_augments_every_batch():
    data = batches_of(20)
    out = list(augmented_epoch(data, 0.0, "mixup", seed=1, epoch=0))
    assert len(out) == 20
    for mb, (images, _) in zip(out, data):
        assert not np.array_equal(mb.images, images)  # lam < 1 almost surely
        assert np.all(mb.lam < 1.0)


def test_alpha_one_passes_everything_through():
    data = batches_of(20)
    out = list(augmented_epoch(data, 1.0, "cutmix", seed=1, epoch=0))
    for mb, (images, labels) in zip(out, data):
        np.testing.assert_array_equal(mb.images, images)
        assert np.array_equal(mb.y_a, labels)
        assert np.array_equal(mb.y_b, labels)
        assert np.all(mb.lam == 1.0)


def test_gate_frequency_tracks_alpha():
    data = batches_of(1, batch=2)
    originals = 0
    trials = 2500
    for b in range(trials):
        mb = next(augmented_epoch(data, 0.25, "mixup", seed=7, epoch=b))
        originals += bool(np.all(mb.lam == 1.0) and np.array_equal(mb.images, data[0][0]))
    assert 0.21 <= originals / trials <= 0.29


def test_wrapper_deterministic():
    data = batches_of(6)
    a = list(augmented_epoch(data, 0.5, "mixup", seed=3, epoch=2))
    b = list(augmented_epoch(data, 0.5, "mixup", seed=3, epoch=2))
    for mb1, mb2 in zip(a, b):
        np.testing.assert_array_equal(mb1.images, mb2.images)
        assert np.array_equal(mb1.lam, mb2.lam)


def test_mode_validation():
    with pytest.raises(ValueError):
        next(augmented_epoch(batches_of(1), 0.5, "cutout", seed=0, epoch=0))
    with pytest.raises(ValueError):
        next(augmented_epoch(batches_of(1), 1.5, "mixup", seed=0, epoch=0))


def test_lambda_distributions():
    us = [draw_lambda(KeyedRng(0, i), "uniform") for i in range(500)]
    assert all(0.0 < u < 1.0 for u in us)
    bs = [draw_lambda(KeyedRng(0, i), "beta", 0.4) for i in range(500)]
    assert all(0.0 < b < 1.0 for b in bs)
    # Beta(0.4, 0.4) piles mass at the ends compared to uniform
    assert np.mean(np.array(bs) < 0.1) > np.mean(np.array(us) < 0.1)
    with pytest.raises(ValueError):
        draw_lambda(KeyedRng(1), "cauchy")


# ---------------------------------------------------------------------------
# loss contract tie-in

def test_mixed_loss_is_lambda_weighted_sum_of_hard_losses():
    net = init_network((Conv2D(4, 5), ReLU(), MaxPool(2), Flatten(), Dense(10)), (3, 28, 28), seed=0)
    images, labels = toy_batch(n=6, seed=9)
    perm = np.roll(np.arange(6), 3)
    mb = mixup(images, labels, perm, 0.35)
    mixed_loss, _ = loss_and_grads(net, mb.images, mb.targets())
    loss_a, _ = loss_and_grads(net, mb.images, mb.y_a)
    loss_b, _ = loss_and_grads(net, mb.images, mb.y_b)
    assert mixed_loss == pytest.approx(0.35 * loss_a + 0.65 * loss_b, abs=1e-12)
    assert np.all(mb.lam + (1.0 - mb.lam) == 1.0)
