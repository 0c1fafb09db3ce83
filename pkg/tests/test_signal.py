import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jamdetect.exceptions import ArgumentError, FormatError
from jamdetect.signal import (
    IQStream,
    JammerConfig,
    NormStats,
    denormalize,
    fit_normalizer,
    generate_baseline,
    inject_jammer,
    normalize,
    qpsk_baseband,
    read_iq,
    rrc_taps,
    window_count,
    window_stream,
    write_iq,
    write_labels,
)


def _ramp_stream(n, labels=None):
    k = np.arange(n, dtype=float)
    return IQStream(k + 1j * (-k), 1e6, labels)


class TestGenerateBaseline:
    def test_rejects_empty(self):
        with pytest.raises(ArgumentError):
            generate_baseline(0, 1e6, seed=7)

    def test_deterministic(self):
        a = generate_baseline(10_000, 1e6, seed=7)
        b = generate_baseline(10_000, 1e6, seed=7)
        assert a.samples.tobytes() == b.samples.tobytes()
        assert not np.array_equal(a.samples, generate_baseline(10_000, 1e6, seed=8).samples)

    def test_labels_zero(self):
        s = generate_baseline(500, 1e6, seed=1)
        assert s.labels.shape == (500,) and not s.labels.any()

    def test_clean_component_unit_power(self):
        # generate_baseline draws the clean signal first from the same seeded generator
        clean = qpsk_baseband(100_000, np.random.default_rng(7))
        power = np.mean(clean.real ** 2 + clean.imag ** 2)
        assert 0.95 <= power <= 1.05
        noisy = generate_baseline(100_000, 1e6, seed=7)
        noise_power = np.mean(np.abs(noisy.samples - clean) ** 2)
        assert noise_power == pytest.approx(0.01, rel=0.05)  # 20 dB SNR

    def test_rrc_unit_energy_and_symmetric(self):
        h = rrc_taps(0.35, 8, 8)
        assert np.sum(h * h) == pytest.approx(1.0)
        np.testing.assert_allclose(h, h[::-1], atol=1e-15)


class TestInjectJammer:
    def setup_method(self):
        self.base = generate_baseline(5000, 1e6, seed=3)

    def test_zero_duration_rejected(self):
        with pytest.raises(ArgumentError):
            JammerConfig("tone", 1000, 0)

    def test_out_of_range(self):
        with pytest.raises(ArgumentError):
            inject_jammer(self.base, JammerConfig("tone", 4500, 600), seed=1)

    def test_tone_power_ratio(self):
        out = inject_jammer(self.base, JammerConfig("tone", 1000, 1000, 0.0), seed=1)
        seg = slice(1000, 2000)
        diff = out.samples[seg] - self.base.samples[seg]
        ratio = np.mean(np.abs(diff) ** 2) / np.mean(np.abs(self.base.samples[seg]) ** 2)
        assert 0.9 <= ratio <= 1.1

    @pytest.mark.parametrize("db", [-10.0, 0.0, 6.0])
    def test_wideband_power_ratio(self, db):
        out = inject_jammer(self.base, JammerConfig("wideband_noise", 200, 2000, db), seed=5)
        seg = slice(200, 2200)
        diff = out.samples[seg] - self.base.samples[seg]
        ratio = np.mean(np.abs(diff) ** 2) / np.mean(np.abs(self.base.samples[seg]) ** 2)
        assert ratio == pytest.approx(10 ** (db / 10), rel=0.1)

    def test_labels_and_additivity(self):
        out = inject_jammer(self.base, JammerConfig("tone", 1000, 1000), seed=1)
        assert out.labels[1000:2000].all()
        assert not out.labels[:1000].any() and not out.labels[2000:].any()
        outside = np.r_[0:1000, 2000:5000]
        assert out.samples[outside].tobytes() == self.base.samples[outside].tobytes()
        assert self.base.labels.sum() == 0  # input untouched

    def test_pulsed_labels_follow_pulses(self):
        cfg = JammerConfig("pulsed", 100, 1000, pulse_period=100, pulse_duty=0.3)
        out = inject_jammer(self.base, cfg, seed=2)
        on = (np.arange(1000) % 100) < 30
        np.testing.assert_array_equal(out.labels[100:1100], on.astype(np.uint8))
        off_idx = 100 + np.flatnonzero(~on)
        assert out.samples[off_idx].tobytes() == self.base.samples[off_idx].tobytes()

    def test_deterministic(self):
        cfg = JammerConfig("wideband_noise", 0, 100)
        a = inject_jammer(self.base, cfg, seed=9)
        b = inject_jammer(self.base, cfg, seed=9)
        assert a.samples.tobytes() == b.samples.tobytes()

    def test_config_from_json(self):
        cfg = JammerConfig.from_dict(json.loads('{"kind": "pulsed", "start_index": 5, "duration": 10}'))
        assert cfg.to_dict()["pulse_period"] == 100
        with pytest.raises(ArgumentError):
            JammerConfig.from_dict({"kind": "tone", "start_index": 0, "duration": 1, "bogus": 1})
        with pytest.raises(ArgumentError):
            JammerConfig("sweep", 0, 1)


class TestWindowStream:
    @pytest.mark.parametrize("n,seq_len,stride,expected", [(10, 10, 1, 1), (100, 10, 10, 10), (100, 20, 7, 12)])
    def test_counts(self, n, seq_len, stride, expected):
        assert len(window_stream(_ramp_stream(n), seq_len, stride)) == expected

    def test_too_short(self):
        with pytest.raises(ArgumentError):
            window_stream(_ramp_stream(5), 10, 1)

    def test_contents_and_labels(self):
        labels = np.zeros(30, dtype=np.uint8)
        labels[14] = 1
        w = window_stream(_ramp_stream(30, labels), 5, 3)
        assert w.values.shape == (9, 5, 2)
        np.testing.assert_array_equal(w.origins, np.arange(9) * 3)
        np.testing.assert_array_equal(w.values[2, :, 0], [6, 7, 8, 9, 10])
        np.testing.assert_array_equal(w.values[2, :, 1], [-6, -7, -8, -9, -10])
        # sample 14 is covered by windows starting at 12 and 14 -> windows 4 (12..16)
        assert w.labels.tolist() == [0, 0, 0, 0, 1, 0, 0, 0, 0]
        assert w[4].label == 1 and w[4].origin_index == 12

    def test_default_stride_is_seq_len(self):
        assert len(window_stream(_ramp_stream(100), 10)) == 10

    @settings(max_examples=200, deadline=None)
    @given(n=st.integers(1, 400), seq_len=st.integers(1, 50), stride=st.integers(1, 60))
    def test_count_formula(self, n, seq_len, stride):
        if n < seq_len:
            return
        w = window_stream(_ramp_stream(n), seq_len, stride)
        assert len(w) == (n - seq_len) // stride + 1 == window_count(n, seq_len, stride)
        assert w.origins[-1] + seq_len <= n


class TestNormalizer:
    def test_all_zero(self):
        s = fit_normalizer(np.zeros((3, 4, 2)))
        np.testing.assert_array_equal(s.mean, [0, 0])
        np.testing.assert_array_equal(s.std, [1e-8, 1e-8])

    def test_hand_case(self):
        s = fit_normalizer(np.array([[[1.0, 1.0], [3.0, 3.0]]]))
        np.testing.assert_allclose(s.mean, [2, 2])
        np.testing.assert_allclose(s.std, [1, 1])

    def test_floor_only_constant_channel(self):
        x = np.stack([np.full(10, 4.0), np.arange(10.0)], axis=1)[None]
        s = fit_normalizer(x)
        assert s.std[0] == 1e-8
        assert s.std[1] == pytest.approx(np.std(np.arange(10.0)))

    def test_empty(self):
        with pytest.raises(ArgumentError):
            fit_normalizer(np.zeros((0, 4, 2)))

    def test_refit_after_normalize(self, rng):
        x = rng.normal(3.0, 2.5, size=(50, 10, 2))
        s = fit_normalizer(x)
        s2 = fit_normalizer(normalize(x, s))
        np.testing.assert_allclose(s2.mean, 0, atol=1e-9)
        np.testing.assert_allclose(s2.std, 1, atol=1e-9)

    def test_known_value(self):
        s = NormStats(np.array([1.0]), np.array([2.0]))
        assert normalize(np.array([[[5.0]]]), s)[0, 0, 0] == 2.0

    def test_windows_roundtrip_keeps_labels(self):
        w = window_stream(_ramp_stream(50, np.r_[np.zeros(25), np.ones(25)]), 10)
        s = fit_normalizer(w)
        back = denormalize(normalize(w, s), s)
        np.testing.assert_allclose(back.values, w.values, atol=1e-9)
        np.testing.assert_array_equal(back.labels, w.labels)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3), shift=st.floats(-1e3, 1e3))
    def test_roundtrip_property(self, seed, scale, shift):
        x = np.random.default_rng(seed).normal(shift, scale, size=(4, 6, 2))
        s = fit_normalizer(x)
        np.testing.assert_allclose(denormalize(normalize(x, s), s), x, rtol=0, atol=1e-9 * max(1.0, abs(shift) + scale))

    def test_rejects_nonpositive_std(self):
        with pytest.raises(ArgumentError):
            NormStats(np.zeros(2), np.array([1.0, 0.0]))


class TestFiles:
    def test_iq_roundtrip(self, tmp_path):
        s = inject_jammer(generate_baseline(1000, 2e6, seed=1), JammerConfig("tone", 10, 20), seed=2)
        write_iq(tmp_path / "x.cf32", s)
        write_labels(tmp_path / "x.labels", s.labels)
        assert (tmp_path / "x.cf32").stat().st_size == 8 * 1000
        raw = np.fromfile(tmp_path / "x.cf32", dtype="<f4")
        assert raw[0] == np.float32(s.samples[0].real) and raw[1] == np.float32(s.samples[0].imag)
        back = read_iq(tmp_path / "x.cf32", 2e6, tmp_path / "x.labels")
        np.testing.assert_allclose(back.samples, s.samples, atol=1e-6)
        np.testing.assert_array_equal(back.labels, s.labels)

    def test_truncated(self, tmp_path):
        (tmp_path / "bad.cf32").write_bytes(b"\x00" * 12)
        with pytest.raises(FormatError):
            read_iq(tmp_path / "bad.cf32", 1e6)

    def test_label_length_mismatch(self, tmp_path):
        s = generate_baseline(10, 1e6, seed=1)
        write_iq(tmp_path / "a.cf32", s)
        write_labels(tmp_path / "a.labels", np.zeros(9))
        with pytest.raises(FormatError):
            read_iq(tmp_path / "a.cf32", 1e6, tmp_path / "a.labels")


def test_stream_validation():
    with pytest.raises(ArgumentError):
        IQStream(np.array([1 + 1j, np.nan]), 1e6)
    with pytest.raises(ArgumentError):
        IQStream(np.ones(3), 1e6, labels=np.ones(2))
    with pytest.raises(ArgumentError):
        IQStream(np.ones(3), 0.0)
