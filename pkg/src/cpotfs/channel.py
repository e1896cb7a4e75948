"""Doubly-selective delay-Doppler channel model.

Paths are specified on the DD grid: integer delay bin l_i (tau_i = l_i/(M*delta_f))
and integer Doppler bin k_i (nu_i = k_i/(N*T)).  The channel applies

    y[j] = sum_i h_i exp(j2pi nu_i (t_j - tau_i)) x[j - l_i] + w[j]

to a sample stream, with t_j = (j + t0_samples) * Ts and circularly-symmetric
complex Gaussian noise of variance ``noise_var``.

The EVA power-delay profile ships as configuration data (a PowerDelayProfile
value), not a hard-coded model, so other 3GPP profiles can be loaded from JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .errors import ConfigurationError
from .frame import FrameConfig

__all__ = [
    "PathSpec", "ChannelSpec", "PowerDelayProfile", "EVA_PROFILE",
    "apply", "gen_eva", "quantize", "awgn",
]


@dataclass(frozen=True)
class PathSpec:
    """One propagation path: complex gain, delay bin, Doppler bin."""
    gain: complex
    delay_idx: int
    doppler_idx: int


@dataclass(frozen=True)
class ChannelSpec:
    """Ordered collection of on-grid propagation paths."""
    paths: tuple[PathSpec, ...]

    def __init__(self, paths):
        object.__setattr__(self, "paths", tuple(paths))

    def __len__(self) -> int:
        return len(self.paths)

    def validate(self, cfg: FrameConfig, require_cp_cover: bool = True) -> None:
        """Check index ranges against a frame config.

        With ``require_cp_cover`` the delay spread must fit inside the
        regular CP (delay_idx <= cp_samples_reg), the condition under which
        the per-symbol CP removes inter-symbol interference.
        """
        for p in self.paths:
            if not 0 <= p.delay_idx < cfg.M:
                raise ConfigurationError(
                    f"delay index {p.delay_idx} outside [0, {cfg.M})")
            if not -cfg.N // 2 <= p.doppler_idx < cfg.N - cfg.N // 2:
                raise ConfigurationError(
                    f"Doppler index {p.doppler_idx} outside "
                    f"[-{cfg.N // 2}, {cfg.N - cfg.N // 2})")
            if require_cp_cover and p.delay_idx > cfg.cp_samples_reg:
                raise ConfigurationError(
                    f"delay index {p.delay_idx} exceeds the regular CP "
                    f"({cfg.cp_samples_reg} samples); the frame is not ISI-free")

    def delay_bins(self) -> list[int]:
        return [p.delay_idx for p in self.paths]

    def total_power(self) -> float:
        return float(sum(abs(p.gain) ** 2 for p in self.paths))

    # -- JSON round trip (gains as [re, im] pairs) ---------------------------

    def to_dict(self) -> dict:
        return {"paths": [{"gain": [p.gain.real, p.gain.imag],
                           "delay_idx": p.delay_idx,
                           "doppler_idx": p.doppler_idx} for p in self.paths]}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelSpec":
        return cls([PathSpec(gain=complex(p["gain"][0], p["gain"][1]),
                             delay_idx=int(p["delay_idx"]),
                             doppler_idx=int(p["doppler_idx"]))
                    for p in d["paths"]])

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def from_json(cls, path) -> "ChannelSpec":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class PowerDelayProfile:
    """Tap delays (ns) and mean powers (dB) of a multipath profile."""
    delays_ns: tuple[float, ...]
    powers_db: tuple[float, ...]

    def __post_init__(self):
        if len(self.delays_ns) != len(self.powers_db):
            raise ConfigurationError("profile delays and powers differ in length")

    @classmethod
    def from_json(cls, path) -> "PowerDelayProfile":
        with open(path) as f:
            d = json.load(f)
        return cls(tuple(d["delays_ns"]), tuple(d["powers_db"]))


# 3GPP Extended Vehicular A profile.
EVA_PROFILE = PowerDelayProfile(
    delays_ns=(0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0),
    powers_db=(0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9),
)


def quantize(nu_hz: float, tau_s: float, cfg: FrameConfig) -> tuple[int, int]:
    """Round a (Doppler Hz, delay s) pair to the nearest grid bins."""
    if abs(nu_hz) > (cfg.N // 2) / (cfg.N * cfg.T):
        raise ValueError(f"Doppler {nu_hz} Hz outside the unambiguous range")
    if not 0 <= tau_s < cfg.M * cfg.Ts:
        raise ValueError(f"delay {tau_s} s outside [0, {cfg.M * cfg.Ts})")
    return round(nu_hz * cfg.N * cfg.T), round(tau_s * cfg.M * cfg.delta_f)


def gen_eva(cfg: FrameConfig, carrier_hz: float, speed_kmh: float,
            rng: np.random.Generator,
            profile: PowerDelayProfile = EVA_PROFILE) -> ChannelSpec:
    """Draw a random channel from a power-delay profile with Jakes Dopplers.

    Tap delays quantize to delay bins; taps landing in the same bin are
    collapsed into a single path whose mean power is the sum of the collapsed
    taps (so each delay bin holds at most one path).  Per-path gains are
    complex Gaussian with the profile's (normalized) powers and per-path
    Dopplers are nu_max*cos(theta) with theta uniform, rounded to the grid,
    where nu_max = carrier_hz * speed / c.
    """
    powers = 10.0 ** (np.asarray(profile.powers_db) / 10.0)
    powers = powers / powers.sum()
    bins = np.round(np.asarray(profile.delays_ns) * 1e-9 * cfg.M * cfg.delta_f)
    bins = bins.astype(int)

    bin_power: dict[int, float] = {}
    for b, p in zip(bins, powers):
        bin_power[b] = bin_power.get(b, 0.0) + p
    delay_bins = sorted(bin_power)

    nu_max = carrier_hz * (speed_kmh / 3.6) / SPEED_OF_LIGHT
    gains = [np.sqrt(bin_power[b] / 2.0)
             * (rng.standard_normal() + 1j * rng.standard_normal())
             for b in delay_bins]
    thetas = rng.uniform(0.0, 2.0 * np.pi, size=len(delay_bins))
    dopplers = np.round(nu_max * np.cos(thetas) * cfg.N * cfg.T).astype(int)

    ch = ChannelSpec([PathSpec(g, b, int(k))
                      for g, b, k in zip(gains, delay_bins, dopplers)])
    ch.validate(cfg)
    return ch


def awgn(shape, noise_var: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian noise of the given variance."""
    if noise_var < 0:
        raise ConfigurationError("noise_var must be non-negative")
    if noise_var == 0:
        return np.zeros(shape, dtype=complex)
    scale = np.sqrt(noise_var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def apply(tx: np.ndarray, ch: ChannelSpec, cfg: FrameConfig, noise_var: float,
          rng: np.random.Generator, t0_samples: int = 0) -> np.ndarray:
    """Pass a sample stream through the multipath channel and add noise.

    ``t0_samples`` places stream sample 0 at time t0_samples * Ts, which
    matters because each path's Doppler rotation is referenced to absolute
    time.  The full-frame simulation chain passes -time_origin_samples(cfg)
    so that t = 0 is the first body sample of symbol 0, matching the
    receive sampler's convention.
    """
    tx = np.asarray(tx, dtype=complex)
    n = tx.shape[0]
    if len(ch) < 1:
        raise ConfigurationError("channel must contain at least one path")
    t = (np.arange(n) + t0_samples) * cfg.Ts
    y = np.zeros(n, dtype=complex)
    for p in ch.paths:
        if p.delay_idx >= n:
            raise ConfigurationError(
                f"path delay {p.delay_idx} exceeds stream length {n}")
        nu = p.doppler_idx / (cfg.N * cfg.T)
        shifted = np.zeros(n, dtype=complex)
        shifted[p.delay_idx:] = tx[:n - p.delay_idx] if p.delay_idx else tx
        y += p.gain * np.exp(2j * np.pi * nu * (t - p.delay_idx * cfg.Ts)) * shifted
    return y + awgn(n, noise_var, rng)
