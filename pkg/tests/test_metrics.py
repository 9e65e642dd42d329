import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from skimage.metrics import structural_similarity as skimage_ssim

from poissonmm import (
    DimensionError,
    DomainError,
    Raster,
    RoiMask,
    UndefinedMetricError,
    cnr,
    mae,
    nrmse,
    psnr,
    ssim,
)

from conftest import rng_for


def raster(values, width=None):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2:
        return Raster.from_image(arr)
    width = width or arr.size
    return Raster(width, arr.size // width, arr)


class TestPsnr:
    def test_exact_match_is_infinite(self):
        x = raster([0.1, 0.7, 0.3])
        assert psnr(x, x) == math.inf

    def test_hand_value(self):
        value = psnr(raster([0.0, 1.0]), raster([0.5, 0.5]), peak=1.0)
        assert value == pytest.approx(10 * math.log10(4.0), rel=1e-15)
        assert value == pytest.approx(6.0206, abs=1e-4)

    def test_scale_invariance_with_peak(self):
        t = raster(rng_for(0).random(64), width=8)
        e = raster(rng_for(1).random(64), width=8)
        c = 37.5
        scaled = psnr(raster(c * t.values, width=8), raster(c * e.values, width=8), peak=c)
        assert scaled == pytest.approx(psnr(t, e, peak=1.0), rel=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            psnr(raster([1.0, 2.0]), raster([[1.0], [2.0]]))

    def test_permutation_invariance(self):
        rng = rng_for(2)
        t = rng.random(36)
        e = rng.random(36)
        perm = rng.permutation(36)
        assert psnr(raster(t[perm], 6), raster(e[perm], 6)) == pytest.approx(
            psnr(raster(t, 6), raster(e, 6)), rel=1e-13)
        assert nrmse(raster(t[perm], 6), raster(e[perm], 6)) == pytest.approx(
            nrmse(raster(t, 6), raster(e, 6)), rel=1e-13)


class TestSsim:
    def test_identical_images_score_one(self):
        x = raster(rng_for(3).random((16, 16)))
        assert ssim(x, x) == 1.0

    def test_symmetric(self):
        a = raster(rng_for(4).random((14, 14)))
        b = raster(rng_for(5).random((14, 14)))
        assert ssim(a, b) == pytest.approx(ssim(b, a), rel=1e-14)

    def test_too_small_image_rejected(self):
        x = raster(np.zeros((8, 8)))
        with pytest.raises(DimensionError):
            ssim(x, x)

    def test_constant_offset_reduces_to_luminance_term(self):
        rng = rng_for(6)
        base = rng.random((16, 16))
        c = 0.25
        value = ssim(raster(base), raster(base + c))
        assert value < 1.0
        # structure and contrast terms are exactly 1; predict from local means
        from scipy import ndimage
        from poissonmm.metrics import _gaussian_window, _SSIM_K1
        win = _gaussian_window()
        mu = ndimage.correlate(base, win, mode="nearest")[5:-5, 5:-5]
        c1 = _SSIM_K1**2
        lum = (2 * mu * (mu + c) + c1) / (mu**2 + (mu + c) ** 2 + c1)
        assert value == pytest.approx(float(lum.mean()), rel=1e-10)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_reference_implementation(self, seed):
        rng = rng_for(100 + seed)
        a = rng.random((24, 20))
        b = np.clip(a + rng.normal(0, 0.15, a.shape), 0, 1)
        ours = ssim(raster(a), raster(b), peak=1.0)
        reference = skimage_ssim(a, b, win_size=11, gaussian_weights=True,
                                 sigma=1.5, use_sample_covariance=False,
                                 data_range=1.0)
        assert ours == pytest.approx(reference, abs=1e-6)


class TestMae:
    def test_identical_is_zero(self):
        x = raster([0.3, 0.4])
        assert mae(x, x) == 0.0

    def test_hand_value_with_unit_scale(self):
        assert mae(raster([0.0, 0.0]), raster([0.1, 0.3]), scale=3000.0) == pytest.approx(600.0)

    def test_unit_scale_is_plain_mae(self):
        t = raster([1.0, 2.0, 3.0])
        e = raster([1.5, 2.0, 2.0])
        assert mae(t, e) == pytest.approx(0.5)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_triangle_inequality(self, seed):
        rng = rng_for(seed)
        a, b, c = (raster(rng.random(25), 5) for _ in range(3))
        assert mae(a, c) <= mae(a, b) + mae(b, c) + 1e-12


class TestNrmse:
    def test_identical_is_zero(self):
        x = raster([3.0, 4.0])
        assert nrmse(x, x) == 0.0

    def test_doubling_scores_one(self):
        t = raster(rng_for(7).random(30) + 0.5, width=6)
        e = raster(2.0 * t.values, width=6)
        assert nrmse(t, e) == pytest.approx(1.0, rel=1e-14)

    def test_hand_value(self):
        assert nrmse(raster([3.0, 4.0]), raster([0.0, 0.0])) == pytest.approx(1.0)

    def test_zero_reference_rejected(self):
        with pytest.raises(DomainError):
            nrmse(raster([0.0, 0.0]), raster([1.0, 1.0]))


class TestCnr:
    def make_image(self):
        # roi_a pixels have mean 2; roi_b pixels are [0.5, 1.5, 1.0, 1.0]
        values = np.array([2.0, 2.0, 0.5, 1.5, 1.0, 1.0])
        a = RoiMask(6, 1, [True, True, False, False, False, False], "a")
        b = RoiMask(6, 1, [False, False, True, True, True, True], "b")
        return raster(values, 6), a, b

    def test_hand_value(self):
        img, a, b = self.make_image()
        # mean_a 2, mean_b 1, population std_b = sqrt(0.125)
        assert cnr(img, a, b) == pytest.approx(1.0 / math.sqrt(0.125), rel=1e-14)

    def test_same_region_scores_zero(self):
        img, a, _ = self.make_image()
        wide = RoiMask(6, 1, [True, True, True, False, False, True], "w")
        assert cnr(img, wide, wide) == 0.0

    def test_constant_reference_rejected(self):
        img = raster([1.0, 1.0, 1.0, 2.0], 4)
        a = RoiMask(4, 1, [False, False, False, True], "a")
        b = RoiMask(4, 1, [True, True, True, False], "b")
        with pytest.raises(UndefinedMetricError):
            cnr(img, a, b)

    def test_empty_mask_rejected(self):
        with pytest.raises(DomainError):
            RoiMask(2, 1, [False, False], "empty")
