from dataclasses import replace

import numpy as np
import pytest
from scipy.signal import find_peaks, welch
from scipy.stats import kurtosis

from enginectx.errors import SynthError
from enginectx.features import FeatureConfig, mfcc_frames
from enginectx.synth import (
    CYLINDERS,
    FUELS,
    ASPIRATIONS,
    SHARPNESS,
    EngineSpec,
    allocate,
    balanced_mix,
    fleet_mix,
    generate_corpus,
    generate_specs,
    misfire_corpus,
    random_spec,
    synthesize,
)


def lowest_strong_peak(clip, lo=5.0, hi=100.0, rel=0.1):
    """Lowest local PSD maximum in [lo, hi] Hz holding >= rel of the strongest one."""
    f, p = welch(clip.samples, fs=clip.sample_rate, nperseg=2 * clip.sample_rate)
    band = (f >= lo) & (f <= hi)
    fb, pb = f[band], p[band]
    peaks, _ = find_peaks(pb)
    peaks = peaks[pb[peaks] >= rel * pb[peaks].max()]
    return float(fb[peaks[0]])


def band_power(clip, lo, hi):
    f, p = welch(clip.samples, fs=clip.sample_rate, nperseg=4096)
    return float(p[(f >= lo) & (f <= hi)].sum())


def test_firing_formula():
    assert EngineSpec(cylinders=4, idle_rpm=600).firing_hz == 20.0
    assert EngineSpec(cylinders=6, idle_rpm=800).firing_hz == 40.0


def test_four_cylinder_600_rpm_fundamental():
    clip = synthesize(EngineSpec(cylinders=4, idle_rpm=600), 5.0)
    assert lowest_strong_peak(clip) == pytest.approx(20.0, abs=0.5)


def test_fundamental_tracks_firing_rate_across_configs():
    rng = np.random.default_rng(0)
    for i in range(24):
        cell = (FUELS[i % 2], CYLINDERS[(i // 2) % 4], ASPIRATIONS[(i // 8) % 2])
        spec = random_spec(*cell, rng=rng, seed=i)
        got = lowest_strong_peak(synthesize(spec, 5.0))
        assert abs(got - spec.firing_hz) <= 0.025 * spec.firing_hz, (cell, spec.firing_hz, got)


def test_turbo_twin_has_more_whine_band_energy():
    rng = np.random.default_rng(2)
    for s in range(5):
        nat = random_spec("gasoline", 4, "natural", rng, seed=s)
        turbo = replace(nat, aspiration="turbo")
        assert band_power(synthesize(turbo, 2.0), 8000, 12000) > band_power(synthesize(nat, 2.0), 8000, 12000)


def test_synthesis_is_deterministic():
    spec = EngineSpec(fuel="diesel", aspiration="turbo", seed=42)
    a, b = synthesize(spec, 2.0), synthesize(spec, 2.0)
    assert np.array_equal(a.samples, b.samples)
    assert a.labels == b.labels == spec.labels()
    assert not np.array_equal(a.samples, synthesize(replace(spec, seed=43), 2.0).samples)


def _diesel_twins(n, seed):
    rng = np.random.default_rng(seed)
    for s in range(n):
        gas = random_spec("gasoline", CYLINDERS[s % 4], "natural", rng, seed=s)
        diesel = replace(gas, fuel="diesel",
                         impulse_sharpness=float(rng.uniform(*SHARPNESS["diesel"])))
        yield synthesize(gas, 2.0), synthesize(diesel, 2.0)


def test_diesel_has_higher_kurtosis_per_matched_pair():
    for gas, diesel in _diesel_twins(20, 1):
        assert kurtosis(diesel.samples) > kurtosis(gas.samples)


def test_diesel_has_more_high_order_cepstral_energy_on_average():
    cfg = FeatureConfig()

    def high_order(clip):
        c = mfcc_frames(clip.samples[:clip.sample_rate], cfg)
        return float(np.abs(c[:, 6:]).sum(axis=1).mean())

    gas, diesel = zip(*((high_order(g), high_order(d)) for g, d in _diesel_twins(20, 1)))
    assert np.mean(diesel) > np.mean(gas)


def test_invalid_specs_and_durations():
    for bad in (dict(fuel="lpg"), dict(cylinders=5), dict(aspiration="super"),
                dict(idle_rpm=300.0), dict(misfire_depth=1.5), dict(cylinder0_gain=0.0)):
        with pytest.raises(SynthError):
            synthesize(replace(EngineSpec(), **bad), 1.0)
    with pytest.raises(SynthError):
        synthesize(EngineSpec(), 0.5)


def test_balanced_allocation():
    counts = allocate(160, balanced_mix())
    assert len(counts) == 16 and set(counts.values()) == {10}


def test_fleet_allocation_within_one():
    mix = fleet_mix()
    total = sum(mix.values())
    for n in (37, 100, 251):
        counts = allocate(n, mix)
        assert sum(counts.values()) == n
        for cell, k in counts.items():
            assert abs(k - n * mix[cell] / total) < 1.0


def test_corpus_ids_unique_and_reproducible():
    specs = generate_specs(200, seed=3)
    assert len(specs) == 200
    assert len({s.seed for s in specs}) == 200
    a = generate_corpus(16, seed=4, duration_s=1.0)
    b = generate_corpus(16, seed=4, duration_s=1.0)
    assert len({c.source_id for c in a}) == 16
    assert all(np.array_equal(x.samples, y.samples) and x.labels == y.labels for x, y in zip(a, b))


def test_infeasible_mix_raises():
    with pytest.raises(SynthError):
        generate_specs(17, {("diesel", 4, "natural"): 1.0, ("gasoline", 4, "natural"): 16.0})
    with pytest.raises(SynthError):
        allocate(10, {("petrol", 4, "natural"): 1.0})
    with pytest.raises(SynthError):
        allocate(0, balanced_mix())


def test_misfire_corpus_alternates_labels():
    clips = misfire_corpus("beta", 4, seed=1, duration_s=1.0)
    assert [c.labels["misfire"] for c in clips] == ["no", "yes", "no", "yes"]
    assert [c.source_id for c in clips] == [f"beta-{i:04d}" for i in range(4)]
    assert all(c.labels["family"] == "beta" for c in clips)
    with pytest.raises(SynthError):
        misfire_corpus("alpha", 1)
