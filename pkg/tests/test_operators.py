import numpy as np
import pytest

from poissonmm import (
    BinSubsetOperator,
    ConfigurationError,
    Convolution2D,
    DegenerateOperatorError,
    DimensionError,
    IdentityOperator,
    Kernel,
    MeasurementVector,
    ParallelProjector,
    ProjectorGeometry,
    Raster,
    ScaledOperator,
    delta_kernel,
    gaussian_kernel,
    normalize_operator,
    sensitivity,
    split_subsets,
    uniform_kernel,
)
from poissonmm.phantoms import disc_phantom

from conftest import make_operator, random_positive_raster, rng_for
from oracles import materialize


class TestKernel:
    def test_even_size_rejected(self):
        with pytest.raises(ConfigurationError):
            Kernel(2, 2, np.ones(4))

    def test_negative_weights_rejected(self):
        with pytest.raises(ConfigurationError):
            Kernel(3, 1, [0.5, -0.1, 0.6])

    def test_gaussian_is_normalized_and_symmetric(self):
        k = gaussian_kernel(9, 1.6)
        assert k.mass == pytest.approx(1.0, abs=1e-15)
        assert k.is_symmetric


class TestConvolution:
    def test_delta_kernel_is_identity(self):
        op = Convolution2D(delta_kernel(3), 7, 5)
        x = random_positive_raster(7, 5, seed=0)
        assert np.array_equal(op.apply(x).bins, x.values)

    def test_mass_preserving_kernel_fixes_constants(self):
        op = Convolution2D(gaussian_kernel(5, 1.1), 8, 8)
        c = Raster.full(8, 8, 3.7)
        assert op.apply(c).bins == pytest.approx(3.7, abs=1e-13)

    def test_hand_convolution_with_wraparound(self):
        op = Convolution2D(Kernel(3, 1, [0.25, 0.5, 0.25]), 4, 1)
        out = op.apply(Raster(4, 1, [1.0, 2.0, 3.0, 4.0]))
        assert out.bins == pytest.approx([2.0, 2.0, 3.0, 3.0], abs=0)

    def test_kernel_larger_than_image(self):
        with pytest.raises(DimensionError):
            Convolution2D(gaussian_kernel(9, 1.0), 8, 8)

    def test_symmetric_kernel_self_adjoint(self):
        op = Convolution2D(gaussian_kernel(5, 1.3), 9, 9)
        v = rng_for(3).random(81)
        fwd = op.apply(Raster(9, 9, v)).bins
        adj = op.adjoint(MeasurementVector(v)).values
        assert fwd == pytest.approx(adj, rel=1e-14)

    def test_adjoint_of_delta_is_identity(self):
        op = Convolution2D(delta_kernel(3), 6, 6)
        v = MeasurementVector(rng_for(4).random(36))
        assert np.array_equal(op.adjoint(v).values, v.bins)

    def test_adjoint_matches_transposed_matrix(self):
        op = Convolution2D(Kernel(3, 3, rng_for(5).random(9)), 6, 5)
        a_fwd, a_adj = materialize(op)
        assert a_adj == pytest.approx(a_fwd.T, rel=1e-13, abs=1e-15)


class TestProjector:
    def test_geometry_must_cover_image(self):
        with pytest.raises(DimensionError):
            ParallelProjector(ProjectorGeometry(8, 10), 16, 16)

    def test_zero_image_zero_sinogram(self):
        op = make_operator("projector", 16, 16)
        assert not np.any(op.apply(Raster.zeros(16, 16)).bins)

    def test_center_pixel_unit_mass_every_angle(self):
        # odd size puts a pixel exactly at the grid center
        op = make_operator("projector", 17, 17, angles=10)
        img = np.zeros((17, 17))
        img[8, 8] = 1.0
        sino = op.apply(Raster.from_image(img)).bins.reshape(10, -1)
        assert sino.sum(axis=1) == pytest.approx(1.0, abs=1e-12)

    def test_disc_mass_conserved_per_angle(self):
        op = make_operator("projector", 24, 24, angles=16)
        x = disc_phantom(24, 24, inside=0.8, outside=0.05)
        sino = op.apply(x).bins.reshape(16, -1)
        assert sino.sum(axis=1) == pytest.approx(float(x.values.sum()), abs=1e-9)

    def test_zero_sinogram_zero_raster(self):
        op = make_operator("projector", 12, 12)
        v = MeasurementVector(np.zeros(op.output_length))
        assert not np.any(op.adjoint(v).values)

    def test_adjoint_matches_transposed_matrix(self):
        op = make_operator("projector", 10, 10, angles=7)
        a_fwd, a_adj = materialize(op)
        assert a_adj == pytest.approx(a_fwd.T, rel=1e-13, abs=1e-15)

    def test_single_bin_backprojects_onto_one_band(self):
        geom = ProjectorGeometry.for_image(16, 16, 12)
        op = ParallelProjector(geom, 16, 16)
        angle_index, bin_index = 3, geom.num_detector_bins // 2
        v = np.zeros(op.output_length)
        v[angle_index * geom.num_detector_bins + bin_index] = 1.0
        back = op.adjoint(MeasurementVector(v)).values
        # pixels with weight must project within one bin of the active one
        theta = geom.angles[angle_index]
        cols = np.arange(16) - 7.5
        rows = np.arange(16) - 7.5
        yy, xx = np.meshgrid(rows, cols, indexing="ij")
        d = (-xx * np.sin(theta) + yy * np.cos(theta)) / geom.detector_spacing \
            + (geom.num_detector_bins - 1) / 2.0
        off_band = np.abs(d.reshape(-1) - bin_index) >= 1.0
        assert not np.any(back[off_band])
        assert np.any(back > 0)


class TestSensitivity:
    def test_identity_all_ones(self):
        s = sensitivity(IdentityOperator(5, 4))
        assert np.array_equal(s.values, np.ones(20))

    def test_convolution_constant_kernel_mass(self):
        k = Kernel(3, 3, rng_for(6).random(9))
        s = sensitivity(Convolution2D(k, 8, 8))
        assert s.values == pytest.approx(k.mass, rel=1e-14)

    def test_projector_strictly_positive(self):
        s = sensitivity(make_operator("projector", 16, 16, angles=2))
        assert np.all(s.values > 0)

    def test_blind_pixel_raises(self):
        full = IdentityOperator(4, 4)
        half = BinSubsetOperator(full, np.arange(8))
        with pytest.raises(DegenerateOperatorError):
            sensitivity(half)


class TestSubsets:
    def test_single_subset_is_same_object(self):
        op = make_operator("projector", 12, 12)
        assert split_subsets(op, 1) == [op]

    def test_projector_stride_selection(self):
        op = make_operator("projector", 12, 12, angles=12)
        subs = split_subsets(op, 4)
        nb = op.geometry.num_detector_bins
        assert len(subs) == 4
        expected = (np.array([1, 5, 9])[:, None] * nb + np.arange(nb)).reshape(-1)
        assert np.array_equal(subs[1].indices, expected)

    def test_union_reproduces_full_apply_bitwise(self):
        op = make_operator("projector", 12, 12, angles=12)
        x = random_positive_raster(12, 12, seed=7)
        full = op.apply(x).bins
        rebuilt = np.empty_like(full)
        for sub in split_subsets(op, 3):
            rebuilt[sub.indices] = sub.apply(x).bins
        assert np.array_equal(rebuilt, full)

    def test_subset_sensitivities_sum_to_full(self):
        op = make_operator("projector", 12, 12, angles=12)
        total = sum(sensitivity(sub).values for sub in split_subsets(op, 4))
        assert total == pytest.approx(sensitivity(op).values, abs=1e-12)

    def test_convolution_splits_by_rows(self):
        op = make_operator("blur", 8, 8)
        subs = split_subsets(op, 2)
        assert np.array_equal(subs[0].indices[:8], np.arange(8))
        assert np.array_equal(subs[0].indices[8:16], np.arange(16, 24))

    def test_nondividing_count_rejected(self):
        op = make_operator("projector", 12, 12, angles=12)
        with pytest.raises(ConfigurationError):
            split_subsets(op, 5)


class TestOperatorProperties:
    @pytest.mark.parametrize("kind", ["identity", "blur", "projector"])
    def test_linearity(self, kind):
        op = make_operator(kind, 12, 12)
        x = random_positive_raster(12, 12, seed=1)
        z = random_positive_raster(12, 12, seed=2)
        a, b = 0.7, -1.3
        combined = op.apply(Raster(12, 12, a * x.values + b * z.values)).bins
        separate = a * op.apply(x).bins + b * op.apply(z).bins
        assert combined == pytest.approx(separate, rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("kind", ["identity", "blur", "projector"])
    def test_nonnegativity_preserved(self, kind):
        op = make_operator(kind, 12, 12)
        x = random_positive_raster(12, 12, seed=3, lo=0.0)
        assert np.all(op.apply(x).bins >= 0)

    def test_scaled_operator(self):
        op = ScaledOperator(make_operator("blur", 8, 8), 7.0)
        x = random_positive_raster(8, 8, seed=4)
        base = make_operator("blur", 8, 8)
        assert op.apply(x).bins == pytest.approx(7.0 * base.apply(x).bins, rel=1e-15)

    def test_normalize_operator_unit_peak_sensitivity(self):
        op, factor = normalize_operator(make_operator("projector", 12, 12))
        assert factor > 0
        assert float(np.max(sensitivity(op).values)) == pytest.approx(1.0, rel=1e-14)
