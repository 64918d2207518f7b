"""Parametric idle-engine audio used as ground truth for end-to-end tests.

This is a caricature, not an acoustics model: a jittered four-stroke firing
pulse train excites a damped resonance, diesels get sharper pulses plus
2-6 kHz knock (sub-millisecond clicks and a few ringing block modes), turbos
get a wandering 8-12 kHz whine at -18 dB, and a white noise floor sits
underneath.
"""

from __future__ import annotations

import itertools
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.signal import butter, sosfilt

from .errors import SynthError
from .signal import CANONICAL_RATE, AudioClip, normalize_samples, write_wav

FUELS = ("diesel", "gasoline")
CYLINDERS = (3, 4, 6, 8)
ASPIRATIONS = ("natural", "turbo")

# per-class timbre ranges; more cylinders idle lower and sound deeper
IDLE_RPM = {3: (800.0, 1100.0), 4: (650.0, 950.0), 6: (550.0, 800.0), 8: (500.0, 700.0)}
RESONANCE_HZ = {3: (260.0, 420.0), 4: (180.0, 300.0), 6: (120.0, 220.0), 8: (80.0, 160.0)}
SHARPNESS = {"gasoline": (0.6, 1.2), "diesel": (2.0, 3.5)}
NOISE_FLOOR_DB = (-45.0, -30.0)
IMBALANCE = (0.02, 0.12)
# diesel knock levels are rms ratios to the engine signal
CLICK_LEVEL = 0.7
CLICK_DECAY_S = 0.0004
N_MODES = 3
MODE_LEVEL = 1.5
MODE_DECAY_S = 0.008


@dataclass(frozen=True)
class EngineSpec:
    fuel: str = "gasoline"
    cylinders: int = 4
    aspiration: str = "natural"
    idle_rpm: float = 750.0
    resonance_hz: float = 220.0
    impulse_sharpness: float = 1.0
    noise_floor_db: float = -40.0
    seed: int = 0
    imbalance: float = 0.05
    misfire_depth: float = 0.0
    family: str = "generic"
    cylinder0_gain: float = 1.0   # built-in weakness of cylinder 0, healthy or not

    def validate(self) -> None:
        if self.fuel not in FUELS:
            raise SynthError(f"fuel must be one of {FUELS}")
        if self.cylinders not in CYLINDERS:
            raise SynthError(f"cylinders must be one of {CYLINDERS}")
        if self.aspiration not in ASPIRATIONS:
            raise SynthError(f"aspiration must be one of {ASPIRATIONS}")
        if not 500.0 <= self.idle_rpm <= 1200.0:
            raise SynthError("idle_rpm must lie in [500, 1200]")
        if self.resonance_hz <= 0 or self.impulse_sharpness <= 0:
            raise SynthError("resonance_hz and impulse_sharpness must be positive")
        if not 0.0 <= self.misfire_depth <= 1.0 or not 0.0 <= self.imbalance < 1.0:
            raise SynthError("misfire_depth must be in [0, 1], imbalance in [0, 1)")
        if not 0.0 < self.cylinder0_gain <= 1.0:
            raise SynthError("cylinder0_gain must be in (0, 1]")

    @property
    def firing_hz(self) -> float:
        return self.idle_rpm / 60.0 * self.cylinders / 2.0

    def labels(self) -> dict:
        return {
            "fuel": self.fuel,
            "aspiration": self.aspiration,
            "cylinders": str(self.cylinders),
            "family": self.family,
            "misfire": "yes" if self.misfire_depth > 0 else "no",
        }


def _pulse(sharpness: float, rate: int) -> np.ndarray:
    # one-sided combustion pulse (t/tau) e^(1 - t/tau); tau = 1.5 ms / sharpness
    tau = 1.5e-3 / sharpness * rate
    t = np.arange(int(np.ceil(12 * tau)) + 1)
    return (t / tau) * np.exp(1.0 - t / tau)


def _resonator(freq: float, rate: int, decay_s: float = 0.012) -> np.ndarray:
    t = np.arange(int(6 * decay_s * rate)) / rate
    return np.exp(-t / decay_s) * np.sin(2 * np.pi * freq * t)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x ** 2)))


def synthesize(spec: EngineSpec, duration_s: float = 5.0, rate: int = CANONICAL_RATE,
               source_id: str | None = None) -> AudioClip:
    spec.validate()
    if duration_s < 1.0:
        raise SynthError("duration must be at least 1 s")
    rng = np.random.default_rng(spec.seed)
    n = int(round(duration_s * rate))
    period = 1.0 / spec.firing_hz

    # firing times with 1% per-cycle jitter
    n_fire = int(duration_s / period) + 3
    steps = period * (1.0 + 0.01 * rng.standard_normal(n_fire))
    times = rng.uniform(0.0, period) + np.concatenate([[0.0], np.cumsum(steps[:-1])])
    times = times[times < duration_s]
    cyl_gain = 1.0 + spec.imbalance * rng.uniform(-1.0, 1.0, spec.cylinders)
    cyl_gain[0] *= spec.cylinder0_gain
    cyl_gain[0] *= 1.0 - spec.misfire_depth
    amps = cyl_gain[np.arange(times.size) % spec.cylinders]
    amps = amps * (1.0 + 0.05 * rng.standard_normal(times.size))

    train = np.zeros(n)
    np.add.at(train, np.minimum((times * rate).astype(np.int64), n - 1), amps)
    excitation = np.convolve(train, _pulse(spec.impulse_sharpness, rate))[:n]
    engine = np.convolve(excitation, _resonator(spec.resonance_hz, rate))[:n]
    engine += 0.5 * excitation * _rms(engine) / max(_rms(excitation), 1e-300)

    if spec.fuel == "diesel":
        # knock: a sub-millisecond 2-6 kHz click plus a few high-Q block
        # modes in the same band, all struck at each firing
        sos = butter(4, [2000.0, 6000.0], btype="bandpass", fs=rate, output="sos")
        m = int(0.01 * rate)
        click = sosfilt(sos, rng.standard_normal(m)) * np.exp(-np.arange(m) / (CLICK_DECAY_S * rate))
        clicks = np.convolve(train, click)[:n]
        ringing = np.zeros(n)
        for f in rng.uniform(2000.0, 6000.0, N_MODES):
            ringing += np.convolve(train, _resonator(f, rate, MODE_DECAY_S))[:n]
        ref = _rms(engine)
        engine = (engine + CLICK_LEVEL * ref * clicks / max(_rms(clicks), 1e-300)
                  + MODE_LEVEL * ref * ringing / max(_rms(ringing), 1e-300))

    level = _rms(engine)
    out = engine
    if spec.aspiration == "turbo":
        t = np.arange(n) / rate
        center = rng.uniform(8500.0, 11500.0)
        wander = rng.uniform(150.0, 450.0) * np.sin(2 * np.pi * rng.uniform(0.1, 0.5) * t
                                                   + rng.uniform(0, 2 * np.pi))
        phase = 2 * np.pi * np.cumsum(center + wander) / rate
        out = out + level * 10 ** (-18.0 / 20.0) * np.sqrt(2.0) * np.sin(phase)
    out = out + level * 10 ** (spec.noise_floor_db / 20.0) * rng.standard_normal(n)

    return AudioClip(
        samples=normalize_samples(out, rate),
        sample_rate=CANONICAL_RATE,
        source_id=source_id or f"synth-{spec.seed}",
        capture_position="underhood",
        labels=spec.labels(),
    )


def random_spec(fuel: str, cylinders: int, aspiration: str, rng: np.random.Generator,
                seed: int, family: str = "generic") -> EngineSpec:
    """Draw per-vehicle timbre for a labelled configuration."""
    return EngineSpec(
        fuel=fuel,
        cylinders=cylinders,
        aspiration=aspiration,
        idle_rpm=float(rng.uniform(*IDLE_RPM[cylinders])),
        resonance_hz=float(rng.uniform(*RESONANCE_HZ[cylinders])),
        impulse_sharpness=float(rng.uniform(*SHARPNESS[fuel])),
        noise_floor_db=float(rng.uniform(*NOISE_FLOOR_DB)),
        imbalance=float(rng.uniform(*IMBALANCE)),
        seed=seed,
        family=family,
    )


Cell = tuple  # (fuel, cylinders, aspiration)


def balanced_mix() -> dict:
    return {cell: 1.0 for cell in itertools.product(FUELS, CYLINDERS, ASPIRATIONS)}


def fleet_mix() -> dict:
    """Imbalanced mix loosely shaped like a light-duty fleet: few 3-cylinders,
    few large gasoline turbos, diesels mostly 4-cylinder turbo."""
    mix = {}
    for fuel, cyl, asp in itertools.product(FUELS, CYLINDERS, ASPIRATIONS):
        w = {3: 0.5, 4: 4.0, 6: 1.5, 8: 1.0}[cyl]
        if fuel == "diesel":
            w *= 0.5 * (2.0 if asp == "turbo" else 0.5)
        mix[(fuel, cyl, asp)] = w
    return mix


def allocate(n_vehicles: int, mix: Mapping[Cell, float]) -> dict:
    """Largest-remainder allocation: each count is within 1 of n * ratio."""
    if n_vehicles < 1:
        raise SynthError("n_vehicles must be positive")
    cells = sorted(mix)
    for c in cells:
        fuel, cyl, asp = c
        if fuel not in FUELS or cyl not in CYLINDERS or asp not in ASPIRATIONS:
            raise SynthError(f"unknown class cell {c!r}")
    w = np.array([float(mix[c]) for c in cells])
    if np.any(w < 0) or w.sum() <= 0:
        raise SynthError("mix weights must be nonnegative with a positive total")
    quota = n_vehicles * w / w.sum()
    counts = np.floor(quota).astype(int)
    remainder = quota - counts
    order = sorted(range(len(cells)), key=lambda i: (-remainder[i], i))
    for i in order[: n_vehicles - counts.sum()]:
        counts[i] += 1
    return {c: int(k) for c, k in zip(cells, counts)}


def generate_specs(n_vehicles: int, mix: Mapping[Cell, float] | None = None,
                   seed: int = 0, family: str = "generic") -> list[EngineSpec]:
    counts = allocate(n_vehicles, mix if mix is not None else balanced_mix())
    for axis in range(3):
        marginal: dict = {}
        for c, k in counts.items():
            marginal[c[axis]] = marginal.get(c[axis], 0) + k
        thin = [v for v, k in marginal.items() if 0 < k < 2]
        if thin:
            raise SynthError(f"infeasible mix: classes {thin} would have fewer than 2 vehicles")
    specs = []
    i = 0
    for cell in sorted(counts):
        for _ in range(counts[cell]):
            ss = np.random.SeedSequence([seed, i])
            rng = np.random.default_rng(ss)
            vseed = int(ss.generate_state(1, dtype=np.uint32)[0])
            specs.append(random_spec(*cell, rng=rng, seed=vseed, family=family))
            i += 1
    return specs


def generate_corpus(n_vehicles: int, mix: Mapping[Cell, float] | None = None, seed: int = 0,
                    duration_s: float = 5.0, family: str = "generic",
                    id_prefix: str = "veh") -> list[AudioClip]:
    """One clip per synthetic vehicle, each with a unique source_id."""
    specs = generate_specs(n_vehicles, mix, seed, family)
    return [synthesize(s, duration_s, source_id=f"{id_prefix}{i:04d}")
            for i, s in enumerate(specs)]


def write_corpus(clips, directory: str | os.PathLike) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    return [write_wav(c, d / f"{c.source_id}.wav") for c in clips]



# -- misfire families ------------------------------------------------------

@dataclass(frozen=True)
class MisfireFamily:
    """Timbre family for the misfire task.

    A family's healthy engines may already have a weak cylinder 0, and a
    misfire weakens it further by `misfire_depth`.
    """

    name: str
    resonance_hz: tuple
    idle_rpm: tuple
    cylinder0_gain: float
    misfire_depth: float
    cylinders: int = 4
    fuel: str = "gasoline"
    aspiration: str = "natural"


MISFIRE_FAMILIES = {
    "alpha": MisfireFamily("alpha", (150.0, 260.0), (650.0, 850.0), 1.0, 0.5),
    "beta": MisfireFamily("beta", (300.0, 450.0), (650.0, 850.0), 0.5, 1.0),
}


def misfire_corpus(family: str | MisfireFamily, n_vehicles: int, seed: int = 0,
                   duration_s: float = 3.0, id_prefix: str | None = None) -> list[AudioClip]:
    """One clip per vehicle; even-numbered vehicles are healthy, odd ones misfire."""
    fam = MISFIRE_FAMILIES[family] if isinstance(family, str) else family
    if n_vehicles < 2:
        raise SynthError("need at least 2 vehicles for a two-class misfire corpus")
    prefix = id_prefix if id_prefix is not None else f"{fam.name}-"
    clips = []
    for i in range(n_vehicles):
        ss = np.random.SeedSequence([seed, i, zlib.crc32(fam.name.encode())])
        rng = np.random.default_rng(ss)
        spec = EngineSpec(
            fuel=fam.fuel, cylinders=fam.cylinders, aspiration=fam.aspiration,
            idle_rpm=float(rng.uniform(*fam.idle_rpm)),
            resonance_hz=float(rng.uniform(*fam.resonance_hz)),
            impulse_sharpness=float(rng.uniform(*SHARPNESS[fam.fuel])),
            noise_floor_db=float(rng.uniform(*NOISE_FLOOR_DB)),
            imbalance=float(rng.uniform(*IMBALANCE)),
            seed=int(ss.generate_state(1, dtype=np.uint32)[0]),
            family=fam.name,
            cylinder0_gain=fam.cylinder0_gain,
            misfire_depth=fam.misfire_depth if i % 2 else 0.0,
        )
        clips.append(synthesize(spec, duration_s, source_id=f"{prefix}{i:04d}"))
    return clips
