import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from enginectx.errors import FeatureError
from enginectx.features import (
    FeatureConfig,
    extract,
    extract_matrix,
    fft_features,
    hz_to_mel,
    mel_filterbank,
    mel_to_hz,
    meta_stats,
    mfcc,
    mfcc_frames,
    read_matrix,
    schema_for,
    write_csv,
    write_matrix,
    zero_crossings,
)
from enginectx.signal import CANONICAL_RATE, Segment
from enginectx.wavelets import band_energies
from oracles import hann_periodic, naive_dft_magnitudes, spectrum_summary

RATE = CANONICAL_RATE


def noise(n, seed=0):
    return np.random.default_rng(seed).standard_normal(n)


def test_default_schema_layout():
    names = schema_for(FeatureConfig())
    assert len(names) == 324
    assert len(set(names)) == len(names)
    fams = [f for f, _ in names]
    assert fams == sorted(fams, key=["fft", "mfcc", "dwt", "meta"].index)
    assert names[0] == ("fft", "mag_0000")
    assert ("dwt", "a6_fraction") in names
    assert extract(noise(RATE)).values.size == 324


def test_meta_flags_shape_schema():
    cfg = FeatureConfig(include_meta=("zcr",))
    assert [n for f, n in schema_for(cfg) if f == "meta"] == ["zcr_rate_hz", "zcr_count"]
    assert extract(noise(RATE), cfg).values.size == len(schema_for(cfg))


@pytest.mark.parametrize("n", [256, 1024])
def test_fft_features_match_naive_dft(n):
    cfg = FeatureConfig(fft_window=n, fft_kept_bins=n // 2, frame=min(2048, n), hop=min(512, n))
    xs = np.stack([noise(n, s) for s in range(10)])
    mags = naive_dft_magnitudes(xs * hann_periodic(n))
    for x, mag in zip(xs, mags):
        got = fft_features(x, cfg)
        assert np.max(np.abs(got[:n // 2] - mag[:n // 2])) <= 1e-9 * mag.max()
        want = spectrum_summary(mag, RATE, n)
        assert np.allclose(got[n // 2:], want, rtol=1e-9, atol=1e-12)


def test_pure_tone_peaks_at_its_bin():
    n = 8192
    k = 40
    x = np.sin(2 * np.pi * k * np.arange(n) / n)
    mag = fft_features(x, FeatureConfig())[:256]
    assert int(np.argmax(mag)) == k


def test_mel_scale_round_trip_and_reference_point():
    f = np.array([0.0, 100.0, 1000.0, 8000.0])
    assert np.allclose(mel_to_hz(hz_to_mel(f)), f)
    assert hz_to_mel(1000.0) == pytest.approx(1000.0, abs=0.1)


def test_filterbank_triangles():
    fb = mel_filterbank(26, 2048, RATE)
    assert fb.shape == (26, 1025)
    assert np.all(fb >= 0) and np.all(fb.max(axis=1) <= 1.0)
    centers = np.argmax(fb, axis=1)
    assert np.all(np.diff(centers) >= 0)


@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_mfcc_gain_invariance(gain, seed):
    x = noise(4096, seed)
    cfg = FeatureConfig()
    a, b = mfcc_frames(x, cfg), mfcc_frames(gain * x, cfg)
    assert np.max(np.abs(a[:, 1:] - b[:, 1:])) <= 1e-6
    # c0 shifts by the log gain spread over the ortho DCT
    shift = 2 * np.log(gain) * np.sqrt(cfg.mel_filters)
    assert np.allclose(b[:, 0] - a[:, 0], shift, atol=1e-6)


def test_mfcc_frame_count_and_summary():
    cfg = FeatureConfig()
    frames = mfcc_frames(noise(RATE), cfg)
    assert frames.shape == (1 + (RATE - 2048) // 512, 13)
    s = mfcc(noise(RATE), cfg)
    assert np.allclose(s[:13], frames.mean(axis=0)) and np.allclose(s[13:], frames.std(axis=0))


def test_dwt_features_follow_band_energies():
    x = noise(RATE, 3)
    v = extract(x).values
    names = schema_for(FeatureConfig())
    e = band_energies(x, 4, 6)
    energy = np.array([v[names.index(("dwt", f"{b}_energy"))]
                       for b in ["d1", "d2", "d3", "d4", "d5", "d6", "a6"]])
    frac = np.array([v[i] for i, (f, n) in enumerate(names) if n.endswith("_fraction")])
    assert np.allclose(energy, e)
    assert frac.sum() == pytest.approx(1.0)


def test_meta_statistics():
    rate = RATE
    t = np.arange(rate) / rate
    tone = np.sin(2 * np.pi * 100 * t + 0.1)
    out = meta_stats(tone)
    skew, kurt, constant, total = out[:4]
    octaves = out[4:12]
    zcr_rate, zcr_count = out[12:]
    assert abs(skew) < 1e-3
    assert kurt == pytest.approx(-1.5, abs=1e-3)
    assert constant == 0.0
    assert total == pytest.approx(0.5, rel=0.05)
    assert octaves.sum() == pytest.approx(total)
    assert zcr_count == zero_crossings(tone) == 200
    assert zcr_rate == pytest.approx(200.0)
    flat = meta_stats(np.full(1000, 0.25))
    assert flat[2] == 1.0 and flat[0] == 0.0 and flat[1] == 0.0


def test_white_noise_psd_total_is_variance():
    x = noise(RATE * 2, 4)
    total = meta_stats(x, ("psd",))[0]
    assert total == pytest.approx(x.var(), rel=0.05)


def test_errors():
    with pytest.raises(FeatureError):
        extract(noise(1000))
    bad = noise(RATE)
    bad[5] = np.inf
    with pytest.raises(FeatureError):
        extract(bad)
    with pytest.raises(FeatureError):
        FeatureConfig(fft_kept_bins=5000)
    with pytest.raises(FeatureError):
        FeatureConfig(mfcc_coeffs=30)
    with pytest.raises(FeatureError):
        FeatureConfig(hop=0)


def test_config_round_trip_and_digest():
    cfg = FeatureConfig(mel_filters=40, include_meta=("zcr", "psd"))
    assert cfg.include_meta == ("psd", "zcr")
    again = FeatureConfig.from_dict(cfg.to_dict())
    assert again == cfg and again.digest() == cfg.digest()
    assert FeatureConfig().digest() != cfg.digest()


def test_segment_input_uses_its_rate():
    x = noise(RATE)
    seg = Segment(x, "p", 0.0, RATE)
    assert np.array_equal(extract(seg).values, extract(x).values)


def test_matrix_dumps_round_trip(tmp_path):
    cfg = FeatureConfig()
    X = extract_matrix([noise(RATE, s) for s in range(3)], cfg)
    meta = [{"source_id": f"v{i}"} for i in range(3)]
    write_matrix(tmp_path / "feat", X, cfg, meta)
    Y, header = read_matrix(tmp_path / "feat")
    assert np.array_equal(X, Y)
    assert header["config_hash"] == cfg.digest()
    assert header["rows"] == meta
    write_csv(tmp_path / "feat.csv", X, cfg, meta)
    with open(tmp_path / "feat.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:2] == ["source_id", "fft.mag_0000"]
    assert float(rows[1][1]) == X[0, 0]
    assert extract_matrix([], cfg).shape == (0, 324)
