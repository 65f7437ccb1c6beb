import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdam.attention import AttentionConfig, MhsaParams, compute_attention
from fdam.diagnostics import (
    LayerDiagnostics,
    band_index,
    chebyshev_radius,
    composed_response,
    diagnostics_csv,
    diagnostics_header,
    effective_rank,
    filter_spectrum,
    high_freq_ratio,
    patch_cosine_similarity,
    profile_csv,
    radial_profile,
)
from fdam.numerics import Rng, fftshift2, singular_values

from oracles import brute_effective_rank, count_bins_at_or_above


def attention_filters(seed, h=8, w=8, heads=2, c=16, scale=1.0):
    cfg = AttentionConfig(heads, c, h, w)
    maps = compute_attention(Rng(seed).normal((c, h, w)), MhsaParams.random(cfg, Rng(seed + 1), scale), cfg)
    return maps.reshape(-1, h, w)


# radius and bands


def test_chebyshev_radius_landmarks():
    rho = fftshift2(chebyshev_radius(8, 8))
    assert rho[4, 4] == 0
    assert rho[0, 0] == 1 and rho[0, 4] == 1
    assert rho[4, 6] == 0.5


def test_band_index_last_band_includes_nyquist():
    idx = band_index(8, 8, 4)
    assert idx[0, 0] == 0
    assert idx[4, 4] == 3
    assert idx.max() == 3


# filter spectrum


def test_filter_spectrum_uniform_and_impulse():
    _, mag = filter_spectrum(np.full((6, 6), 1 / 36))
    assert abs(mag[0, 0] - 1) < 1e-15
    assert mag.ravel()[1:].max() < 1e-15
    imp = np.zeros((6, 6))
    imp[2, 3] = 1
    np.testing.assert_allclose(filter_spectrum(imp)[1], 1, atol=1e-15)


def test_filter_spectrum_attention_dc():
    _, mag = filter_spectrum(attention_filters(0))
    assert np.abs(mag[:, 0, 0] - 1).max() < 1e-9


# radial profile


def test_profile_all_ones():
    prof = radial_profile(np.ones((16, 16)), 8)
    assert not prof.empty.any()
    np.testing.assert_allclose(prof.mean_magnitude, 1)
    np.testing.assert_allclose(prof.std_magnitude, 0)
    assert prof.counts.sum() == 256
    small = radial_profile(np.ones((8, 8)), 8)
    np.testing.assert_allclose(small.mean_magnitude[~small.empty], 1)


def test_profile_dc_only():
    g = np.zeros((8, 8))
    g[0, 0] = 3.0
    prof = radial_profile(g, 4)
    assert prof.mean_magnitude[0] > 0
    assert np.all(prof.mean_magnitude[1:] == 0)


def test_profile_uniform_attention_filters():
    filt = np.full((64, 8, 8), 1 / 64)
    prof = radial_profile(filter_spectrum(filt)[1], 8)
    # band 0 holds DC only at this resolution
    assert prof.counts[0] == 1
    assert abs(prof.mean_magnitude[0] - 1) < 1e-12
    assert np.abs(prof.mean_magnitude[1:]).max() < 1e-12
    assert np.abs(prof.std_magnitude).max() < 1e-12


def test_profile_edges_and_empty_bands():
    prof = radial_profile(np.ones((4, 4)), 8)
    assert prof.band_edges[0] == 0 and prof.band_edges[-1] == 1
    assert np.all(np.diff(prof.band_edges) > 0)
    assert prof.empty.any()  # 4x4 only has radii 0, 0.5, 1
    text = profile_csv(prof)
    assert len(text.strip().splitlines()) == 1 + int((~prof.empty).sum())


def test_profile_rejects_few_bands():
    with pytest.raises(ValueError):
        radial_profile(np.ones((4, 4)), 1)


# high-frequency ratio


def test_hf_ratio_constant_is_zero():
    assert high_freq_ratio(np.full((3, 8, 8), 2.0)) == 0.0


def test_hf_ratio_checkerboard_is_one():
    i, j = np.indices((8, 6))
    assert abs(high_freq_ratio((-1.0) ** (i + j)) - 1) < 1e-12


def test_hf_ratio_impulse_counts_bins():
    # flat spectrum: the ratio is the share of bins at or above the cutoff
    n = count_bins_at_or_above(8, 8, 0.5)
    assert n == 55
    x = np.zeros((8, 8))
    x[3, 5] = 1
    assert abs(high_freq_ratio(x, 0.5) - n / 64) < 1e-12


def test_hf_ratio_white_noise_expectation():
    x = Rng(5).normal((400, 8, 8))
    assert abs(high_freq_ratio(x, 0.5) - 55 / 64) < 0.01


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.01, 100), st.booleans())
def test_hf_ratio_scale_invariant(seed, c, neg):
    x = Rng(seed).normal((2, 6, 7))
    c = -c if neg else c
    assert abs(high_freq_ratio(c * x) - high_freq_ratio(x)) < 1e-12


def test_hf_ratio_errors():
    with pytest.raises(ValueError):
        high_freq_ratio(np.zeros((2, 4, 4)))
    with pytest.raises(ValueError):
        high_freq_ratio(np.ones((4, 4)), 1.0)


# effective rank


def test_effective_rank_identity():
    assert abs(effective_rank(np.eye(4)) - 4) < 1e-9


def test_effective_rank_rank_one():
    assert abs(effective_rank(np.outer([1.0, 2, 3], [4.0, 5])) - 1) < 1e-9


def test_effective_rank_hand_value():
    assert abs(effective_rank(np.diag([2.0, 1, 1])) - math.exp(1.5 * math.log(2))) < 1e-12
    assert abs(effective_rank(np.diag([2.0, 1, 1])) - 2.8284) < 1e-4


def test_effective_rank_matches_entropy_oracle():
    m = Rng(6).normal((20, 7))
    assert abs(effective_rank(m) - brute_effective_rank(singular_values(m))) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(1e-3, 1e3))
def test_effective_rank_scale_invariant_and_bounded(seed, c):
    m = Rng(seed).normal((9, 5))
    r = effective_rank(m)
    assert abs(effective_rank(c * m) - r) < 1e-9
    assert 1 - 1e-9 <= r <= 5 + 1e-9


def test_effective_rank_zero_matrix():
    with pytest.raises(ValueError):
        effective_rank(np.zeros((3, 3)))


# cosine similarity


def test_cosine_identical_rows():
    assert abs(patch_cosine_similarity(np.tile([1.0, 2, 3], (5, 1))) - 1) < 1e-12


def test_cosine_orthogonal_and_opposite():
    assert abs(patch_cosine_similarity(np.eye(2))) < 1e-15
    v = np.array([1.0, -2, 0.5])
    assert abs(patch_cosine_similarity(np.stack([v, -v])) + 1) < 1e-12


def test_cosine_all_pairs_oracle():
    t = Rng(7).normal((6, 4))
    vals = []
    for i in range(6):
        for j in range(i + 1, 6):
            vals.append(t[i] @ t[j] / math.sqrt((t[i] @ t[i]) * (t[j] @ t[j])))
    assert abs(patch_cosine_similarity(t) - math.fsum(vals) / len(vals)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_cosine_row_rescaling_invariant(seed):
    rng = Rng(seed)
    t = rng.normal((5, 3))
    s = rng.uniform(5, low=0.1, high=10.0)
    assert abs(patch_cosine_similarity(t * s[:, None]) - patch_cosine_similarity(t)) < 1e-12


def test_cosine_errors():
    with pytest.raises(ValueError):
        patch_cosine_similarity(np.array([[1.0, 0], [0, 0]]))
    with pytest.raises(ValueError):
        patch_cosine_similarity(np.ones((1, 3)))


# composed response


def test_composed_all_pass():
    np.testing.assert_array_equal(composed_response([np.ones((4, 4))] * 5), np.ones((4, 4)))


def test_composed_uniform_stays_dc_only():
    r = filter_spectrum(np.full((6, 6), 1 / 36))[0]
    out = np.abs(composed_response([r] * 7))
    assert abs(out[0, 0] - 1) < 1e-12
    assert out.ravel()[1:].max() < 1e-12


def test_composed_attention_decays_and_keeps_dc():
    specs = [filter_spectrum(attention_filters(10 + k)[5])[0] for k in range(12)]
    out = np.abs(composed_response(specs))
    assert abs(out[0, 0] - 1) < 1e-9
    top = out.ravel()[1:].max()
    for s in specs:
        assert top < np.abs(s).ravel()[1:].max()


def test_composed_dc_invariance_up_to_16():
    specs = [filter_spectrum(attention_filters(30 + k, scale=2.0)[0])[0] for k in range(16)]
    for n in range(1, 17):
        assert abs(abs(composed_response(specs[:n])[0, 0]) - 1) < 1e-9


def test_composed_shape_mismatch():
    with pytest.raises(ValueError):
        composed_response([np.ones((4, 4)), np.ones((4, 5))])
    with pytest.raises(ValueError):
        composed_response([])


# csv


def test_diagnostics_csv_columns():
    prof = radial_profile(np.ones((4, 4)), 8)
    rows = [LayerDiagnostics(1, 0.5, 2.0, 0.1, prof), LayerDiagnostics(2, 0.25, 3.0, 0.2, None)]
    lines = diagnostics_csv(rows, 8).strip().splitlines()
    assert lines[0].split(",") == diagnostics_header(8)
    assert len(lines) == 3
    first = lines[1].split(",")
    assert len(first) == 4 + 16
    assert first[:4] == ["1", "0.5", "2.0", "0.1"]
    # empty bands are written as blanks
    assert first[4 + 1] == "" and first[4] == "1.0"
    assert lines[2].split(",")[4:] == [""] * 16
