import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tiredefect.texfeat import (
    FeatureConfig,
    GLCMConfig,
    LBPConfig,
    WindowFeaturizer,
    extract_features,
    family_slices,
    feature_names,
    fourier_features,
    glcm,
    glcm_features,
    haar_dwt2,
    haar_idwt2,
    haralick,
    lbp_code_map,
    lbp_features,
    lbp_histogram,
    magnitude_spectrum,
    parse_flags,
    radial_profile,
    spectral_descriptors,
    stats_summary,
    wavelet_features,
)

from .oracles import dft2_naive, glcm_naive, haar_level_naive, haralick_naive, lbp_naive

SMALL = FeatureConfig(lbp_radii=(2,))


def rand_img(seed, shape):
    return np.random.default_rng(seed).uniform(0, 255, shape)


finite_vals = st.floats(-1e3, 1e3, allow_nan=False)


# --- stats summary -----------------------------------------------------------

@given(arrays(np.float64, st.integers(1, 40), elements=finite_vals))
def test_stats_summary_invariants(v):
    mean, median, lo, hi, std, energy = stats_summary(v)
    assert lo <= median <= hi
    assert lo <= mean <= hi
    assert std >= 0 and energy >= 0
    assert energy == pytest.approx(float(np.sum(v.astype(float) ** 2)), rel=1e-12, abs=1e-12)


def test_stats_summary_even_median_and_population_std():
    out = stats_summary(np.array([1.0, 2.0, 3.0, 10.0]))
    assert out[1] == 2.5
    assert out[4] == pytest.approx(math.sqrt(np.mean((np.array([1, 2, 3, 10]) - 4.0) ** 2)))
    assert out[5] == 114.0


# --- LBP ---------------------------------------------------------------------

@pytest.mark.parametrize("radius,bins", [(1, 59), (2, 243), (8, 4035), (16, 16259)])
def test_lbp_bin_formula(radius, bins):
    cfg = LBPConfig(radius)
    assert cfg.points == 8 * radius
    assert cfg.n_bins == cfg.points * (cfg.points - 1) + 3 == bins


def test_lbp_constant_is_all_ones_code():
    codes = lbp_code_map(np.full((9, 9), 40.0), 2)
    assert codes.shape == (5, 5)
    assert np.all(codes == 16 * 15 + 1)


def test_lbp_bright_center_is_zero():
    img = np.zeros((5, 5))
    img[2, 2] = 255
    assert lbp_code_map(img, 2)[0, 0] == 0


def test_lbp_ramp_matches_oracle():
    img = np.add.outer(np.arange(5.0), np.arange(5.0)) * 20
    np.testing.assert_array_equal(lbp_code_map(img, 2), lbp_naive(img, 2))


@pytest.mark.parametrize("seed", range(20))
def test_lbp_random_matches_oracle(seed):
    img = rand_img(seed, (16, 16))
    np.testing.assert_array_equal(lbp_code_map(img, 2), lbp_naive(img, 2))


def test_lbp_radius_8_matches_oracle():
    img = np.round(rand_img(99, (19, 20)))
    np.testing.assert_array_equal(lbp_code_map(img, 8), lbp_naive(img, 8))


def test_lbp_too_small():
    with pytest.raises(ValueError):
        lbp_code_map(np.zeros((4, 10)), 2)


@given(arrays(np.float64, st.tuples(st.integers(5, 12), st.integers(5, 12)), elements=st.integers(0, 255)),
       st.integers(-3, 3))
@settings(max_examples=40, deadline=None)
def test_lbp_invariant_to_power_of_two_scaling(img, exp):
    # scaling by 2**k is exact in floating point, so bilinear samples scale exactly too
    np.testing.assert_array_equal(lbp_code_map(img, 2), lbp_code_map(img * 2.0 ** exp, 2))


@given(arrays(np.bool_, st.tuples(st.integers(5, 12), st.integers(5, 12))))
@settings(max_examples=40, deadline=None)
def test_lbp_invariant_to_square_map_on_two_level_images(mask):
    img = np.where(mask, 200.0, 30.0)
    np.testing.assert_array_equal(lbp_code_map(img, 2), lbp_code_map(img ** 2 / 255, 2))


@given(arrays(np.float64, st.tuples(st.integers(6, 14), st.integers(6, 14)), elements=st.floats(0, 255)))
@settings(max_examples=40, deadline=None)
def test_lbp_histogram_sums_to_one(img):
    for r in (1, 2):
        h = lbp_histogram(lbp_code_map(img, r), r)
        assert len(h) == LBPConfig(r).n_bins
        assert abs(h.sum() - 1) < 1e-9


def test_lbp_features_layout_and_constant_indicator():
    fv = lbp_features(np.full((24, 24), 7.0), SMALL)
    assert len(fv) == 243 + 6
    hist = fv.values[:243]
    assert hist.max() == 1.0 and hist.sum() == 1.0
    cfg = FeatureConfig(lbp_radii=(16, 2, 8))
    assert len(feature_names("L", cfg)) == 243 + 4035 + 16259 + 3 * 6
    assert feature_names("L", cfg)[0].startswith("L.r2.")


# --- GLCM --------------------------------------------------------------------

def test_glcm_two_level_example():
    cfg = GLCMConfig(levels=2)
    np.testing.assert_array_equal(glcm(np.array([[0, 0], [255, 255]]), 1, 0.0, cfg), [[0.5, 0], [0, 0.5]])


def test_glcm_constant_single_cell():
    p = glcm(np.full((8, 8), 100.0), 1, math.pi / 4)
    assert p.sum() == 1.0 and np.count_nonzero(p) == 1 and p[12, 12] == 1.0


def test_glcm_displacement_too_large():
    with pytest.raises(ValueError):
        glcm(np.zeros((4, 4)), 5, 0.0)
    with pytest.raises(ValueError):
        glcm(np.zeros((4, 4)), 0, 0.0)


@pytest.mark.parametrize("seed", range(50))
def test_glcm_matches_naive_pair_count(seed):
    img = rand_img(seed, (8, 8))
    for d, a in GLCMConfig().pairs():
        if d >= 8:
            continue
        np.testing.assert_array_equal(glcm(img, d, a), glcm_naive(img, d, a, 32))


@pytest.mark.parametrize("symmetric,normalized", [(False, False), (True, False), (False, True)])
def test_glcm_flag_variants_match_oracle(symmetric, normalized):
    img = rand_img(3, (9, 7))
    cfg = GLCMConfig(levels=8, symmetric=symmetric, normalized=normalized)
    np.testing.assert_array_equal(glcm(img, 2, 3 * math.pi / 4, cfg),
                                  glcm_naive(img, 2, 3 * math.pi / 4, 8, symmetric, normalized))


@given(arrays(np.float64, st.tuples(st.integers(2, 10), st.integers(2, 10)), elements=st.floats(0, 255)),
       st.sampled_from([0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4]))
@settings(max_examples=50, deadline=None)
def test_glcm_normalized_symmetric(img, angle):
    p = glcm(img, 1, angle, GLCMConfig(levels=8))
    assert p.min() >= 0 and abs(p.sum() - 1) < 1e-9
    np.testing.assert_array_equal(p, p.T)


def test_haralick_constant_and_checkerboard():
    const = haralick(glcm(np.full((6, 6), 9.0), 1, 0.0))
    np.testing.assert_allclose(const, [0, 0, 1, 1, 1])
    board = (np.indices((6, 6)).sum(axis=0) % 2) * 255.0
    out = haralick(glcm(board, 1, 0.0, GLCMConfig(levels=2)))
    assert out[0] == 1.0 and out[1] == 1.0
    assert haralick(np.array([[0.5, 0], [0, 0.5]]))[3] == pytest.approx(math.sqrt(0.5))


@pytest.mark.parametrize("seed", range(5))
def test_haralick_matches_naive(seed):
    p = glcm(rand_img(seed, (12, 12)), 1, math.pi / 2, GLCMConfig(levels=6))
    np.testing.assert_allclose(haralick(p), haralick_naive(p), rtol=1e-10, atol=1e-12)


def test_glcm_feature_count_and_order():
    fv = glcm_features(rand_img(0, (16, 16)))
    assert len(fv) == 3 * 4 * 5
    assert fv.names[0] == "G.d1.a0.contrast" and fv.names[5] == "G.d1.a45.contrast"


# --- Haar wavelet ------------------------------------------------------------

def test_haar_2x2_hand_values():
    a, b, c, d = 3.0, 8.0, -1.0, 5.0
    pyr = haar_dwt2(np.array([[a, b], [c, d]]), 1)
    lv = pyr.levels[0]
    assert pyr.approx[0, 0] == pytest.approx((a + b + c + d) / 2)
    assert lv.HL[0, 0] == pytest.approx((a - b + c - d) / 2)
    assert lv.LH[0, 0] == pytest.approx((a + b - c - d) / 2)
    assert lv.HH[0, 0] == pytest.approx((a - b - c + d) / 2)


@pytest.mark.parametrize("seed", range(5))
def test_haar_level_matches_dense_matrix_oracle(seed):
    img = rand_img(seed, (8, 12))
    pyr = haar_dwt2(img, 1)
    ll, lh, hl, hh = haar_level_naive(img)
    lv = pyr.levels[0]
    for got, want in [(pyr.approx, ll), (lv.LH, lh), (lv.HL, hl), (lv.HH, hh)]:
        np.testing.assert_allclose(got, want, atol=1e-9)


def test_haar_constant_details_zero():
    pyr = haar_dwt2(np.full((16, 16), 42.0), 3)
    for lv in pyr.levels:
        assert not lv.LH.any() and not lv.HL.any() and not lv.HH.any()


def test_haar_too_deep():
    with pytest.raises(ValueError):
        haar_dwt2(np.zeros((8, 8)), 4)


@pytest.mark.parametrize("seed", range(50))
def test_haar_parseval_and_reconstruction(seed):
    rng = np.random.default_rng(seed)
    h, w = 2 * rng.integers(4, 33, size=2) * 4
    img = rng.uniform(0, 255, (h, w))
    pyr = haar_dwt2(img, 3)
    energy = sum(float(np.sum(c ** 2)) for c in pyr.coefficients())
    assert energy == pytest.approx(float(np.sum(img ** 2)), rel=1e-6)
    np.testing.assert_allclose(haar_idwt2(pyr), img, rtol=1e-6, atol=1e-6)


@given(st.integers(8, 30), st.integers(8, 30), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_haar_reconstruction_odd_sizes(h, w, seed):
    img = rand_img(seed, (h, w))
    np.testing.assert_allclose(haar_idwt2(haar_dwt2(img, 3)), img, atol=1e-6)


def test_wavelet_features_constant_and_stripes():
    fv = wavelet_features(np.full((32, 32), 90.0))
    assert len(fv) == 54 and not fv.values.any()
    stripes = np.tile(np.array([0.0, 255.0]), (32, 16))
    pyr = haar_dwt2(stripes, 1)
    assert np.sum(pyr.levels[0].HL ** 2) > 10 * max(np.sum(pyr.levels[0].LH ** 2), 1e-12)
    names = wavelet_features(stripes).names
    hl_energy = wavelet_features(stripes).values[names.index("W.l1.HL.energy")]
    lh_energy = wavelet_features(stripes).values[names.index("W.l1.LH.energy")]
    assert hl_energy > 10 * max(lh_energy, 1e-12)


# --- Fourier -----------------------------------------------------------------

@pytest.mark.parametrize("shape", [(8, 8), (9, 6), (16, 16)])
def test_spectrum_matches_naive_dft(shape):
    img = rand_img(1, shape)
    x = img - img.mean()
    np.testing.assert_allclose(magnitude_spectrum(img, centered=False), np.abs(dft2_naive(x)), atol=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_spectrum_parseval(seed):
    img = rand_img(seed, (24, 20))
    x = img - img.mean()
    mag = magnitude_spectrum(img)
    assert np.sum(mag ** 2) / x.size == pytest.approx(np.sum(x ** 2), rel=1e-6)


def test_fourier_constant_is_zero():
    assert not fourier_features(np.full((16, 16), 33.0)).values.any()


def test_flat_profile_flatness_one():
    r = np.arange(10.0)
    out = spectral_descriptors(r, np.full(10, 3.0))
    assert out[2] == pytest.approx(1.0)
    assert out[0] == pytest.approx(4.5)
    assert out[3] == 8.0  # first r with cumulative share >= 0.85


@pytest.mark.parametrize("f", [3, 5, 9])
def test_sinusoid_centroid(f):
    x = np.arange(64)
    img = np.tile(127.5 + 100 * np.sin(2 * np.pi * f * x / 64), (64, 1))
    radii, prof = radial_profile(np.abs(dft2_naive(img - img.mean())))
    assert spectral_descriptors(radii, prof)[0] == pytest.approx(f, abs=0.5)


def test_radial_profile_annulus_means():
    mag = np.zeros((5, 5))
    mag[0, 1] = mag[0, 4] = 4.0
    radii, prof = radial_profile(mag)
    assert radii[0] == 0 and prof[0] == 0
    assert prof[1] == pytest.approx(8.0 / 8)  # eight bins round to radius 1


# --- extraction / ordering ---------------------------------------------------

def test_flags_parsing():
    assert parse_flags("WG") == ("G", "W")
    with pytest.raises(ValueError):
        parse_flags("")
    with pytest.raises(ValueError):
        parse_flags("GX")


def test_extract_w_constant_gives_54_zeros():
    fv = extract_features(np.full((32, 32), 10.0), "W")
    assert len(fv) == 54 and not fv.values.any()


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=10, deadline=None)
def test_layout_depends_only_on_flags(seed):
    img = rand_img(seed, (32, 32))
    fv = extract_features(img, "GFW", SMALL)
    sl = family_slices("GFW", SMALL)
    assert fv.names == tuple(feature_names("GFW", SMALL))
    assert len(fv) == sum(len(feature_names(f, SMALL)) for f in "GFW")
    assert sl["G"].start == 0 and sl["W"].stop == len(fv)


def test_extract_deterministic_and_batch_equal():
    img = rand_img(5, (64, 80))
    featurizer = WindowFeaturizer(img, "LGFW", SMALL)
    origins = [(0, 0), (16, 8), (48, 32)]
    batch = featurizer.extract(origins, 32)
    for (x, y), row in zip(origins, batch):
        single = extract_features(img[y:y + 32, x:x + 32], "LGFW", SMALL).values
        np.testing.assert_array_equal(row, single)
    np.testing.assert_array_equal(featurizer.extract(origins, 32), batch)


def test_rectangular_window_supported():
    fv = extract_features(rand_img(2, (20, 28)), "LGFW", SMALL)
    assert np.all(np.isfinite(fv.values))


def test_window_out_of_bounds():
    with pytest.raises(ValueError):
        WindowFeaturizer(np.zeros((20, 20)), "F").extract([(10, 10)], 16)
