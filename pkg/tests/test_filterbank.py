import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scaloforge.filterbank import (
    DegenerateFilterError,
    FilterBank,
    ScaleDegenerateError,
    WaveletScaleParams,
    build_mel_scale,
    build_wavelet_scale,
    count_constant_q,
    count_evenly_spaced,
    digitize,
    hz_from_mel,
    mel_from_hz,
)

# frozen from high-precision evaluation of the closed forms
K_RAW_PAPER = 241.4257594480127
P_RAW_Q35 = 49.99597677075575
P_RAW_Q12 = 16.817153745105768
BOUNDARY_PAPER = 205.27859237536657


class TestCounts:
    def test_paper_constant_q_count(self, stock_params):
        assert count_constant_q(stock_params) == 241

    def test_paper_evenly_spaced_count(self):
        assert count_evenly_spaced(35) == 49

    def test_count_formula_prefloor_value(self, stock_params):
        raw = 1 + stock_params.Q * math.log2(
            stock_params.T_max * stock_params.f_h / (2 * stock_params.Q)
        )
        assert raw == pytest.approx(K_RAW_PAPER, rel=1e-12)
        assert math.floor(raw) == count_constant_q(stock_params)

    def test_evenly_spaced_q1(self):
        assert count_evenly_spaced(1) == 1

    def test_evenly_spaced_q12_prefloor(self):
        raw = 1.0 / (2 ** (1 / 12) - 1)
        assert raw == pytest.approx(P_RAW_Q12, rel=1e-12)
        assert count_evenly_spaced(12) == 16

    def test_boundary_construction_k2(self):
        # f_h chosen so 1 + Q log2(T_max f_h / 2Q) = 2 exactly
        params = WaveletScaleParams(f_h=10 * 2 ** (1 / 5), f_l=0.0, T_max=1.0, Q=5)
        assert count_constant_q(params) == 2

    def test_degenerate_scale(self):
        with pytest.raises(ScaleDegenerateError):
            WaveletScaleParams(f_h=50.0, f_l=0.0, T_max=1.0, Q=35)

    @given(st.integers(1, 64))
    @settings(max_examples=30, deadline=None)
    def test_evenly_spaced_matches_direct_floor(self, q):
        assert count_evenly_spaced(q) == math.floor(1.0 / (2 ** (1.0 / q) - 1.0))


class TestWaveletScale:
    def test_paper_total_filters(self, stock_params):
        bank = build_wavelet_scale(stock_params)
        assert bank.K == 241 and bank.P == 49 and bank.J == 290

    def test_low_frequency_boundary(self, stock_params):
        bank = build_wavelet_scale(stock_params)
        assert bank.centers[bank.P] == pytest.approx(BOUNDARY_PAPER, abs=0.01)
        assert bank.centers[bank.P] == pytest.approx(2 * 35 / 0.341, rel=1e-12)

    def test_top_center_two_routes(self, stock_params):
        # direct closed form vs iterated octave-step multiplication
        bank = build_wavelet_scale(stock_params)
        step = 2 ** (1 / stock_params.Q)
        iterated = bank.centers[bank.P]
        for _ in range(bank.K - 1):
            iterated *= step
        assert bank.centers[-1] == pytest.approx(iterated, rel=1e-6)

    def test_constant_q_ratio(self, stock_params):
        bank = build_wavelet_scale(stock_params)
        high = bank.centers[bank.P :]
        ratios = high[1:] / high[:-1]
        assert np.allclose(ratios, 2 ** (1 / stock_params.Q), rtol=1e-9)

    def test_constant_q_bandwidths(self, stock_params):
        bank = build_wavelet_scale(stock_params)
        high = slice(bank.P, None)
        assert np.allclose(
            bank.bandwidths[high], bank.centers[high] / stock_params.Q, rtol=1e-9
        )

    def test_junction_continuity(self, stock_params):
        # spacing of the last evenly spaced centers continues the geometric step
        bank = build_wavelet_scale(stock_params)
        even_step = bank.centers[bank.P - 1] - bank.centers[bank.P - 2]
        geo_step = bank.centers[bank.P + 1] - bank.centers[bank.P]
        assert even_step == pytest.approx(geo_step, rel=0.10)

    def test_time_interval_duality(self, stock_params):
        bank = build_wavelet_scale(stock_params)
        t = stock_params.Q / bank.centers[bank.P :]
        assert np.all(t <= stock_params.T_max / 2 * (1 + 1e-12))

    def test_low_band_spacing_and_bandwidth(self, stock_params):
        bank = build_wavelet_scale(stock_params)
        low = bank.centers[: bank.P]
        assert np.allclose(np.diff(low), np.diff(low)[0], rtol=1e-9)
        assert np.allclose(bank.bandwidths[: bank.P], 2 / stock_params.T_max, rtol=1e-12)
        assert low[0] == stock_params.f_l

    @given(
        st.integers(2, 40),
        st.floats(0.05, 1.0),
        st.floats(2000.0, 24000.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_centers_increasing_any_params(self, q, t_max, f_h):
        if t_max * f_h <= 2.1 * q:
            return
        params = WaveletScaleParams(f_h=f_h, f_l=0.1, T_max=t_max, Q=q)
        bank = build_wavelet_scale(params)
        assert np.all(np.diff(bank.centers) > 0)
        assert bank.J == bank.K + bank.P
        assert bank.centers[-1] <= f_h * (1 + 1e-12)


class TestMelScale:
    def test_mel_of_zero(self):
        assert mel_from_hz(0.0) == 0.0

    def test_mel_of_700(self):
        assert float(mel_from_hz(700.0)) == pytest.approx(781.0, abs=1e-12)

    def test_centers_evenly_spaced_in_mel(self):
        bank = build_mel_scale(0.0, 24000.0, 128)
        mels = mel_from_hz(bank.centers)
        steps = np.diff(mels)
        assert np.allclose(steps, steps[0], atol=1e-9)

    def test_counts_and_kind(self):
        bank = build_mel_scale(0.0, 24000.0, 128)
        assert bank.K == 128 and bank.P == 0 and bank.scale_kind == "mel"

    def test_inverse_pair(self):
        f = np.array([0.0, 123.4, 7000.0])
        assert np.allclose(hz_from_mel(mel_from_hz(f)), f, atol=1e-9)


class TestDigitize:
    def test_gaussian_peak_exact_one(self):
        # center placed exactly on a bin
        bank = FilterBank(
            centers=np.array([1000.0]),
            bandwidths=np.array([100.0]),
            shape="gaussian",
            K=1,
            P=0,
            scale_kind="wavelet",
            f_h=4000.0,
        )
        filt = digitize(bank, 1024, 8192.0)  # bin width 8 Hz; 1000/8 = bin 125
        assert filt.weights[0, 125] == 1.0

    def test_gaussian_one_sigma_value(self):
        bank = FilterBank(
            centers=np.array([1000.0]),
            bandwidths=np.array([80.0]),
            shape="gaussian",
            K=1,
            P=0,
            scale_kind="wavelet",
            f_h=4000.0,
        )
        filt = digitize(bank, 1024, 8192.0)
        # bins at 1000 +- 80 Hz = bins 115 and 135
        assert filt.weights[0, 115] == pytest.approx(math.exp(-0.5), rel=1e-12)
        assert filt.weights[0, 135] == pytest.approx(math.exp(-0.5), rel=1e-12)

    def test_triangle_apex_and_feet(self):
        bank = FilterBank(
            centers=np.array([800.0, 1600.0, 2400.0]),
            bandwidths=np.array([400.0, 400.0, 400.0]),
            shape="triangle",
            K=3,
            P=0,
            scale_kind="mel",
            f_h=3200.0,
        )
        filt = digitize(bank, 1024, 8192.0)  # bin width 8 Hz
        assert filt.weights[1, 200] == 1.0  # apex at 1600 Hz
        assert filt.weights[1, 100] == 0.0  # foot at 800 Hz
        assert filt.weights[1, 300] == 0.0  # foot at 2400 Hz
        assert filt.weights[1, 250] == pytest.approx(0.5, rel=1e-12)

    def test_gaussian_row_symmetry(self, stock_params):
        bank = build_wavelet_scale(stock_params)
        filt = digitize(bank, 32768, 48000.0)
        freqs = filt.bin_frequencies
        for j in (100, 200, 280):
            row = filt.weights[j]
            center_bin = int(np.argmin(np.abs(freqs - bank.centers[j])))
            span = bank.bandwidths[j] / (48000.0 / 32768)
            if span < 3:
                continue
            width = int(2 * span)
            left = row[center_bin - width : center_bin]
            right = row[center_bin + 1 : center_bin + width + 1][::-1]
            assert np.allclose(left, right, rtol=0.2, atol=1e-6)

    def test_degenerate_row_error_names_filter(self):
        bank = FilterBank(
            centers=np.array([100.0, 5000.0]),
            bandwidths=np.array([0.01, 500.0]),
            shape="gaussian",
            K=2,
            P=0,
            scale_kind="wavelet",
            f_h=8000.0,
        )
        with pytest.raises(DegenerateFilterError, match="filter 0"):
            digitize(bank, 256, 16384.0)

    def test_fft_size_must_be_power_of_two(self, stock_params):
        bank = build_wavelet_scale(stock_params)
        with pytest.raises(ValueError, match="power of two"):
            digitize(bank, 1000, 48000.0)

    def test_rate_must_cover_top_center(self, stock_params):
        bank = build_wavelet_scale(stock_params)
        with pytest.raises(ValueError, match="below the top center"):
            digitize(bank, 1024, 16000.0)

    def test_gaussian_tiny_weights_stored_as_zero(self):
        bank = FilterBank(
            centers=np.array([1000.0]),
            bandwidths=np.array([50.0]),
            shape="gaussian",
            K=1,
            P=0,
            scale_kind="wavelet",
            f_h=4000.0,
        )
        filt = digitize(bank, 2048, 8192.0)
        far = filt.weights[0, filt.bin_frequencies > 2000.0]
        assert np.all(far == 0.0)


class TestJsonRoundTrip:
    def test_bank_serialization(self, stock_params):
        bank = build_wavelet_scale(stock_params)
        doc = bank.to_json()
        parsed = json.loads(doc)
        assert parsed["scale_kind"] == "wavelet"
        assert len(parsed["centers"]) == 290
        back = FilterBank.from_json(doc)
        assert np.array_equal(back.centers, bank.centers)
        assert np.array_equal(back.bandwidths, bank.bandwidths)
        assert back.K == bank.K and back.P == bank.P
