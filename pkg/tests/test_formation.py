import numpy as np
import pytest

from conftest import random_shift_map, to_dense

from mrcakit.formation import (
    BlurBank,
    FormationPreset,
    ShiftMap,
    SpectralWeights,
    add_gaussian_noise,
    average_weights,
    build_formation,
    butterworth_blur,
    cassi_shift_map,
    conv_norm_bound,
    decimate,
    delta_blur_bank,
    equalize_lri_stats,
    formation_preset,
    gaussian_blur_bank,
    mask_apply,
    mosaic,
    shift_apply,
    spatial_convolve,
    spectral_degrade,
    sum_channels,
)
from mrcakit.masks import Mask, builtin_tile, periodic_mask, random_code_mask
from mrcakit.operators import (
    add,
    adjoint_dot_test,
    compose,
    power_iteration_norm,
    stack,
)


class TestSpectralDegrade:
    def test_average_of_two_bands(self):
        op = spectral_degrade(SpectralWeights([[0.5, 0.5]]), (1, 1, 2))
        out = op.apply(np.array([[[2.0, 4.0]]]))
        assert out[0, 0, 0] == 3.0

    def test_identity_weights(self, rng):
        x = rng.standard_normal((3, 4, 3))
        op = spectral_degrade(SpectralWeights(np.eye(3)), x.shape)
        np.testing.assert_array_equal(op.apply(x), x)
        assert op.norm_bound == pytest.approx(1.0)

    def test_adjoint_random_weights(self, rng):
        w = SpectralWeights(rng.standard_normal((3, 5)))
        op = spectral_degrade(w, (4, 4, 5))
        assert adjoint_dot_test(op, trials=20, seed=0) < 1e-10

    def test_band_count_mismatch(self):
        with pytest.raises(ValueError, match="bands"):
            spectral_degrade(SpectralWeights([[1.0, 0.0]]), (2, 2, 3))

    def test_norm_is_largest_singular_value(self, rng):
        mat = rng.standard_normal((2, 4))
        op = spectral_degrade(SpectralWeights(mat), (3, 3, 4))
        assert op.norm_bound == pytest.approx(np.linalg.svd(mat, compute_uv=False)[0])
        est = power_iteration_norm(op, iters=200, seed=1)
        assert est == pytest.approx(op.norm_bound, rel=1e-6)


class TestSpatialConvolve:
    def test_delta_kernel_is_identity(self, rng):
        x = rng.standard_normal((4, 5, 2))
        op = spatial_convolve(delta_blur_bank(2), x.shape)
        np.testing.assert_allclose(op.apply(x), x, atol=1e-14)
        assert op.norm_bound == pytest.approx(1.0, abs=1e-15)

    def test_constant_image_dc_gain(self, rng):
        kernel = rng.random((3, 3, 1))
        op = spatial_convolve(BlurBank(kernel), (6, 6, 1))
        out = op.apply(np.full((6, 6, 1), 2.0))
        np.testing.assert_allclose(out, 2.0 * kernel.sum(), rtol=1e-12)

    def test_matches_dense_circulant_oracle(self, rng):
        # kernel [0.5, 0.5] on a 1x4 band: anchor at index 1, so
        # out[j] = 0.5*x[j] + 0.5*x[(j+1) % 4]
        bank = BlurBank(np.array([0.5, 0.5]).reshape(1, 2, 1))
        op = spatial_convolve(bank, (1, 4, 1))
        circulant = np.zeros((4, 4))
        for j in range(4):
            circulant[j, j] = 0.5
            circulant[j, (j + 1) % 4] = 0.5
        np.testing.assert_allclose(to_dense(op), circulant, atol=1e-14)

    def test_adjoint_is_correlation(self, rng):
        bank = BlurBank(rng.standard_normal((3, 2, 3)))
        op = spatial_convolve(bank, (5, 6, 3))
        assert adjoint_dot_test(op, trials=20, seed=2) < 1e-10

    def test_kernel_larger_than_image(self):
        with pytest.raises(ValueError, match="exceeds"):
            spatial_convolve(BlurBank(np.ones((5, 5, 1))), (4, 4, 1))


class TestConvNormBound:
    def test_counterexample_kernel(self):
        # the coefficient-l2 formula is NOT an upper bound here: the true
        # circulant norm is the DC gain 1.0 while sqrt(0.25+0.25) < 1
        bank = BlurBank(np.array([0.5, 0.5]).reshape(1, 2, 1))
        bound = conv_norm_bound(bank, (1, 4))
        assert bound.exact == pytest.approx(1.0, abs=1e-12)
        assert bound.coefficient_l2 == pytest.approx(np.sqrt(0.5), abs=1e-12)
        assert bound.coefficient_l2 < bound.exact

    def test_delta_kernel_both_one(self):
        bound = conv_norm_bound(delta_blur_bank(3), (4, 4))
        assert bound.exact == pytest.approx(1.0, abs=1e-15)
        assert bound.coefficient_l2 == pytest.approx(1.0, abs=1e-15)

    def test_unit_sum_gaussian_dc(self):
        bank = gaussian_blur_bank(2, ratio=2, max_radius=3)
        bound = conv_norm_bound(bank, (8, 8))
        assert bound.exact == pytest.approx(1.0, rel=1e-12)

    def test_exact_matches_power_iteration(self, rng):
        bank = BlurBank(rng.standard_normal((3, 3, 2)))
        op = spatial_convolve(bank, (6, 6, 2))
        est = power_iteration_norm(op, iters=300, seed=3)
        assert est <= op.norm_bound * (1 + 1e-9)
        assert est == pytest.approx(op.norm_bound, rel=1e-3)


class TestDecimate:
    def test_ratio_one_is_identity(self, rng):
        x = rng.standard_normal((3, 5, 2))
        np.testing.assert_array_equal(decimate(x.shape, 1).apply(x), x)

    def test_constant_image(self):
        out = decimate((4, 4, 1), 2).apply(np.full((4, 4, 1), 7.0))
        assert out.shape == (2, 2, 1)
        np.testing.assert_array_equal(out, np.full((2, 2, 1), 7.0))

    def test_decimate_after_adjoint_is_identity(self, rng):
        op = decimate((6, 4, 2), 2)
        y = rng.standard_normal(op.output_shape)
        np.testing.assert_array_equal(op.apply(op.adjoint_apply(y)), y)

    def test_selection_rows_of_dense_oracle(self):
        op = decimate((4, 4, 1), 2)
        dense = to_dense(op)
        # every row selects exactly one sample with weight 1
        np.testing.assert_array_equal(dense.sum(axis=1), np.ones(4))
        assert set(np.unique(dense)) == {0.0, 1.0}

    def test_non_divisible_rejected(self):
        with pytest.raises(ValueError, match="divide"):
            decimate((5, 4, 1), 2)


class TestMaskApply:
    def test_all_ones_identity_norm_one(self, rng):
        mask = Mask(np.ones((3, 3, 2)), (0, 1))
        op = mask_apply(mask)
        x = rng.standard_normal((3, 3, 2))
        np.testing.assert_array_equal(op.apply(x), x)
        assert op.norm_bound == 1.0

    def test_all_zero_mask(self, rng):
        op = mask_apply(Mask(np.zeros((2, 2, 1)), (0,)))
        assert not op.apply(rng.standard_normal((2, 2, 1))).any()
        assert op.norm_bound == 0.0

    def test_self_adjoint_to_rounding(self, rng):
        op = mask_apply(Mask(rng.uniform(0, 3, (4, 4, 3)), (0, 1, 2)))
        assert adjoint_dot_test(op, trials=20, seed=4) < 1e-15

    def test_norm_is_max_entry(self, rng):
        vals = rng.uniform(0, 5, (3, 3, 2))
        assert mask_apply(Mask(vals, (0, 1))).norm_bound == vals.max()


class TestShift:
    def test_identity_map(self, rng):
        shape = (2, 3, 2)
        m = ShiftMap(shape, shape, np.arange(12))
        x = rng.standard_normal(shape)
        np.testing.assert_array_equal(shift_apply(m).apply(x), x)

    def test_cassi_1x2x2_example(self):
        # bands [a, b] and [c, d] shear to [a, b, 0] and [0, c, d]
        x = np.zeros((1, 2, 2))
        x[0, :, 0] = [1.0, 2.0]
        x[0, :, 1] = [3.0, 4.0]
        out = shift_apply(cassi_shift_map(1, 2, 2)).apply(x)
        np.testing.assert_array_equal(out[0, :, 0], [1.0, 2.0, 0.0])
        np.testing.assert_array_equal(out[0, :, 1], [0.0, 3.0, 4.0])

    def test_adjoint_then_shift_is_identity(self, rng):
        m = random_shift_map(rng, (3, 4, 2))
        op = shift_apply(m)
        x = rng.standard_normal((3, 4, 2))
        np.testing.assert_array_equal(op.adjoint_apply(op.apply(x)), x)

    def test_dense_oracle_is_partial_permutation(self, rng):
        m = random_shift_map(rng, (2, 3, 2))
        dense = to_dense(shift_apply(m))
        np.testing.assert_array_equal(dense.T @ dense, np.eye(12))

    def test_non_injective_rejected(self):
        with pytest.raises(ValueError, match="one-to-one"):
            ShiftMap((1, 2, 1), (1, 2, 1), np.array([0, 0]))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="range"):
            ShiftMap((1, 2, 1), (1, 2, 1), np.array([0, 5]))


class TestCassiMap:
    def test_single_band_identity_width(self):
        m = cassi_shift_map(3, 5, 1)
        assert m.output_shape == (3, 5, 1)
        np.testing.assert_array_equal(m.target_flat, np.arange(15))

    def test_width_rule(self):
        assert cassi_shift_map(1, 2, 2).output_shape == (1, 3, 2)
        assert cassi_shift_map(4, 8, 5).output_shape == (4, 12, 5)

    def test_band_column_occupancy(self):
        # 0-based band k occupies output columns k .. nj+k-1
        ni, nj, nk = 2, 4, 3
        op = shift_apply(cassi_shift_map(ni, nj, nk))
        out = op.apply(np.ones((ni, nj, nk)))
        for k in range(nk):
            occupied = np.flatnonzero(out[0, :, k])
            np.testing.assert_array_equal(occupied, np.arange(k, nj + k))


class TestSumChannels:
    def test_single_band(self, rng):
        x = rng.standard_normal((3, 3, 1))
        op = sum_channels(x.shape)
        np.testing.assert_array_equal(op.apply(x), x[:, :, 0])
        assert op.norm_bound == 1.0

    def test_four_band_bound_two(self):
        assert sum_channels((2, 2, 4)).norm_bound == 2.0

    def test_constant_cube(self):
        out = sum_channels((2, 2, 5)).apply(np.full((2, 2, 5), 3.0))
        np.testing.assert_array_equal(out, np.full((2, 2), 15.0))

    def test_adjoint_replicates(self, rng):
        op = sum_channels((2, 2, 3))
        y = rng.standard_normal((2, 2))
        back = op.adjoint_apply(y)
        for k in range(3):
            np.testing.assert_array_equal(back[:, :, k], y)


class TestMosaic:
    def test_bayer_selects_assigned_channel(self, rng):
        lri, _ = periodic_mask(builtin_tile("bayer"), 2, 2)
        x = rng.standard_normal((2, 2, 3))
        y = mosaic(lri).apply(x)
        assignment = np.array([[0, 1], [1, 2]])
        for i in range(2):
            for j in range(2):
                assert y[i, j] == x[i, j, assignment[i, j]]

    def test_all_ones_single_band_identity(self, rng):
        m = Mask(np.ones((3, 3, 1)), (0,))
        x = rng.standard_normal((3, 3, 1))
        np.testing.assert_array_equal(mosaic(m).apply(x), x[:, :, 0])

    def test_cassi_hand_example(self):
        # Eq-by-hand: masked bands [a,b],[c,d] shear and sum to [a, b+c, d]
        x = np.zeros((1, 2, 2))
        x[0, :, 0] = [1.0, 2.0]
        x[0, :, 1] = [3.0, 4.0]
        op = mosaic(Mask(np.ones((1, 2, 2)), (0, 1)), cassi_shift_map(1, 2, 2))
        np.testing.assert_array_equal(op.apply(x), [[1.0, 5.0, 4.0]])

    def test_exact_norm_for_binary_selection(self):
        lri, _ = periodic_mask(builtin_tile("quad4"), 4, 4)
        op = mosaic(lri)
        assert op.norm_bound == 1.0
        true = np.linalg.svd(to_dense(op), compute_uv=False)[0]
        assert true == pytest.approx(1.0, abs=1e-12)

    def test_exact_norm_with_shift_overlap(self, rng):
        mask = random_code_mask(3, 4, 3, seed=2)
        op = mosaic(mask, cassi_shift_map(3, 4, 3))
        true = np.linalg.svd(to_dense(op), compute_uv=False)[0]
        assert true <= op.norm_bound * (1 + 1e-12)
        assert op.norm_bound == pytest.approx(true, rel=1e-12)

    def test_shift_shape_mismatch(self):
        with pytest.raises(ValueError, match="shift"):
            mosaic(Mask(np.ones((2, 2, 2)), (0, 1)), cassi_shift_map(3, 2, 2))


class TestButterworth:
    def test_constant_unchanged(self):
        op = butterworth_blur((8, 8), rho_b=1.4)
        x = np.full((8, 8), 5.0)
        np.testing.assert_allclose(op.apply(x), x, rtol=1e-12)
        assert op.norm_bound == pytest.approx(1.0, abs=1e-15)

    def test_vanishing_diameter_is_identity(self, rng):
        op = butterworth_blur((6, 6), rho_b=1e-9)
        x = rng.standard_normal((6, 6))
        np.testing.assert_allclose(op.apply(x), x, atol=1e-12)

    def test_impulse_response_matches_transfer_oracle(self):
        ni = nj = 16
        rho_b, order = 2.0, 3
        op = butterworth_blur((ni, nj), rho_b, order)
        impulse = np.zeros((ni, nj))
        impulse[0, 0] = 1.0
        response = op.apply(impulse)
        fi = np.fft.fftfreq(ni)[:, None]
        fj = np.fft.fftfreq(nj)[None, :]
        transfer = 1.0 / np.sqrt(1.0 + (np.hypot(fi, fj) * rho_b) ** (2 * order))
        np.testing.assert_allclose(np.fft.fft2(response).real, transfer, atol=1e-12)
        np.testing.assert_allclose(np.fft.fft2(response).imag, 0.0, atol=1e-12)

    def test_self_adjoint(self, rng):
        op = butterworth_blur((5, 7, 2), rho_b=1.2, order=2)
        assert adjoint_dot_test(op, trials=10, seed=5) < 1e-12

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            butterworth_blur((4, 4), rho_b=0.0)
        with pytest.raises(ValueError):
            butterworth_blur((4, 4), rho_b=1.0, order=0)


class TestPresetReductions:
    """The assembled model collapses to the elementary formations."""

    SHAPE = (8, 8, 4)

    def test_multires_reduction_bitwise(self, rng):
        preset = formation_preset("multires", 8, 8, 4, ratio=2)
        model = build_formation(preset)
        shape = self.SHAPE
        elementary = stack(
            spectral_degrade(average_weights(4, 1), shape),
            compose(decimate(shape, 2),
                    spatial_convolve(gaussian_blur_bank(4, 2, max_radius=3), shape)))
        x = rng.standard_normal(shape)
        np.testing.assert_array_equal(model.op.apply(x), elementary.apply(x))

    def test_cfa_reduction_bitwise(self, rng):
        preset = formation_preset("cfa", 8, 8, 4)
        model = build_formation(preset)
        lri, _ = periodic_mask(builtin_tile("quad4"), 8, 8)
        elementary = mosaic(lri)
        x = rng.standard_normal(self.SHAPE)
        np.testing.assert_array_equal(model.op.apply(x), elementary.apply(x))
        # direct arithmetic oracle
        np.testing.assert_array_equal(model.op.apply(x), (x * lri.values).sum(axis=2))

    def test_cassi_reduction_bitwise(self, rng):
        preset = formation_preset("cassi", 8, 8, 4, seed=3)
        model = build_formation(preset)
        mask = random_code_mask(8, 8, 4, seed=3)
        elementary = mosaic(mask, cassi_shift_map(8, 8, 4))
        x = rng.standard_normal(self.SHAPE)
        np.testing.assert_array_equal(model.op.apply(x), elementary.apply(x))

    def test_mrca_with_zero_weights_equals_cfa(self, rng):
        # suppressing the HRI branch with all-zero weights collapses the
        # focal-plane sum to the plain mosaic
        shape = self.SHAPE
        lri, pan = periodic_mask(builtin_tile("bt4pan"), 8, 8)
        bank = gaussian_blur_bank(4, 2, max_radius=3)
        branch_m = compose(mosaic(lri), spatial_convolve(bank, shape))
        zero_w = spectral_degrade(SpectralWeights(np.zeros((1, 4))), shape)
        branch_p = compose(mosaic(pan), zero_w)
        full = add(branch_m, branch_p)
        x = rng.standard_normal(shape)
        np.testing.assert_array_equal(full.apply(x), branch_m.apply(x))

    def test_mrca_rejects_mismatched_builtin_mask(self):
        preset = formation_preset("mrca", 4, 4, 2, mask="bt4pan")
        with pytest.raises(ValueError):
            build_formation(preset)  # bt4pan carries 4 channels, cube has 2

    def test_mrca_dense_oracle_4x4x2(self, rng, tmp_path):
        # full model against the explicit matrix assembled from the dense
        # factors of every elementary block
        from mrcakit.masks import PeriodicTile, write_mask_file
        tile = PeriodicTile(np.array([[-1, 0], [1, -1]]), 2)
        path = str(tmp_path / "tile.txt")
        write_mask_file(path, tile)
        preset = formation_preset("mrca", 4, 4, 2, mask=path)
        model = build_formation(preset)

        lri, pan = periodic_mask(tile, 4, 4)
        shape = (4, 4, 2)
        bank = gaussian_blur_bank(2, 2, max_radius=1)
        dense = (to_dense(mosaic(lri)) @ to_dense(spatial_convolve(bank, shape))
                 + to_dense(mosaic(pan)) @ to_dense(spectral_degrade(average_weights(2, 1), shape)))
        np.testing.assert_allclose(to_dense(model.op), dense, atol=1e-13)

    def test_compression_ratios(self):
        assert build_formation(
            formation_preset("mrca", 8, 8, 4)).compression_ratio == pytest.approx(0.25)
        assert build_formation(
            formation_preset("multires", 8, 8, 4, ratio=2)).compression_ratio == pytest.approx(0.5)

    def test_mrca_supports_partition_plane(self):
        model = build_formation(formation_preset("mrca", 8, 8, 4))
        assert not np.any(model.lri_support & model.hri_support)
        assert np.all(model.lri_support | model.hri_support)


class TestNoise:
    def test_zero_sigma_identical(self, rng):
        y = rng.standard_normal((5, 5))
        np.testing.assert_array_equal(add_gaussian_noise(y, 0.0, seed=3), y)

    def test_mean_and_std(self):
        y = np.zeros(10 ** 6)
        noisy = add_gaussian_noise(y, 0.5, seed=42)
        # law of large numbers: mean within 4 sigma / sqrt(n)
        assert abs(noisy.mean()) < 4 * 0.5 / 1e3
        assert noisy.std() == pytest.approx(0.5, rel=0.01)

    def test_deterministic(self, rng):
        y = rng.standard_normal((4, 4))
        np.testing.assert_array_equal(add_gaussian_noise(y, 0.1, seed=7),
                                      add_gaussian_noise(y, 0.1, seed=7))

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            add_gaussian_noise(np.zeros(3), -1.0)


class TestEqualize:
    def test_already_matching_unchanged(self, rng):
        y = np.array([1.0, 2.0, 3.0, 1.0, 2.0, 3.0])
        lri = np.array([True, True, True, False, False, False])
        out = equalize_lri_stats(y, lri, ~lri)
        np.testing.assert_allclose(out, y, rtol=1e-12)

    def test_double_scale_halved(self):
        y = np.array([1.0, 2.0, 3.0, 4.0, 2.0, 4.0, 6.0, 8.0])
        hri = np.zeros(8, dtype=bool)
        hri[:4] = True
        out = equalize_lri_stats(y, ~hri, hri)
        np.testing.assert_allclose(out[4:], [1.0, 2.0, 3.0, 4.0], rtol=1e-12)
        np.testing.assert_array_equal(out[:4], y[:4])

    def test_idempotent(self, rng):
        y = rng.standard_normal(50)
        lri = np.zeros(50, dtype=bool)
        lri[:20] = True
        once = equalize_lri_stats(y, lri, ~lri)
        twice = equalize_lri_stats(once, lri, ~lri)
        np.testing.assert_allclose(twice, once, rtol=1e-12, atol=1e-14)

    def test_degenerate_lri_rejected(self):
        y = np.array([1.0, 1.0, 2.0, 3.0])
        lri = np.array([True, True, False, False])
        with pytest.raises(ValueError, match="variance"):
            equalize_lri_stats(y, lri, ~lri)

    def test_empty_support_rejected(self):
        y = np.zeros(4)
        none = np.zeros(4, dtype=bool)
        with pytest.raises(ValueError, match="sample"):
            equalize_lri_stats(y, none, ~none)


class TestPresetSerialization:
    def test_round_trip(self):
        preset = formation_preset("mrca", 64, 32, 4, noise_sigma=0.01, seed=9,
                                  hri_blur="butterworth", rho_b=1.3)
        back = FormationPreset.from_text(preset.to_text())
        assert back == preset

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown preset keys"):
            FormationPreset.from_text("name=cfa\nni=4\nnj=4\nnk=3\nbogus=1\n")

    def test_missing_name_rejected(self):
        with pytest.raises(ValueError, match="name"):
            FormationPreset.from_text("ni=4\nnj=4\nnk=3\n")

    def test_unknown_formation_rejected(self):
        with pytest.raises(ValueError, match="preset"):
            formation_preset("sparkle", 4, 4, 3)

    def test_default_masks_per_kind(self):
        assert formation_preset("cfa", 4, 4, 4).mask == "quad4"
        assert formation_preset("cassi", 4, 4, 4).mask == "random"
        assert formation_preset("mrca", 4, 4, 4).mask == "bt4pan"

    def test_mask_channel_mismatch_rejected(self):
        with pytest.raises(ValueError, match="channels"):
            build_formation(formation_preset("cfa", 4, 4, 3, mask="quad4"))
