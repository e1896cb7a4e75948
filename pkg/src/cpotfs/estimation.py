"""Embedded-pilot channel estimation.

A single pilot of value x_p at (k_p, l_p) is surrounded by a zero guard
region sized so that pilot and data never interfere through the spreading
channel: Doppler rows k_p +/- 2*k_hat_max and delay columns l_p +/- l_max,
with k_hat_max = k_max + n_hat.  The receiver then reads the observation
window (delay offsets 0..l_max by Doppler offsets -k_hat_max..+k_hat_max
around the pilot) and estimates at most one path per delay bin, either by
maximum likelihood over the per-path spreading signature or by direct
thresholding of the observed cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSpec, PathSpec
from .effective import EffectiveChannel, doppler_spread, rcp_reference
from .errors import ConfigurationError
from .frame import FrameConfig, _check_grid

__all__ = [
    "PilotLayout", "embed_pilot", "extract_observation", "pilot_response",
    "ml_estimate", "threshold_estimate",
]


@dataclass(frozen=True)
class PilotLayout:
    """Pilot placement, value and guard sizing for embedded-pilot CE."""

    k_p: int
    l_p: int
    x_p: complex
    k_max: int
    l_max: int
    k_hat_max: int

    @classmethod
    def for_config(cls, cfg: FrameConfig, k_max: int, l_max: int,
                   x_p: complex, k_p: int | None = None,
                   l_p: int | None = None) -> "PilotLayout":
        """Build and validate a layout; the pilot defaults to the grid center.

        k_max / l_max bound the channel's Doppler / delay indices; the
        observation half-width is k_hat_max = k_max + N_hat.
        """
        layout = cls(k_p=cfg.N // 2 if k_p is None else k_p,
                     l_p=cfg.M // 2 if l_p is None else l_p,
                     x_p=complex(x_p), k_max=int(k_max), l_max=int(l_max),
                     k_hat_max=int(k_max) + cfg.N_hat)
        layout.validate(cfg)
        return layout

    def validate(self, cfg: FrameConfig) -> None:
        """The guard region must fit inside the grid without wrapping;
        wrap-around would alias pilot and data."""
        if self.k_max < 0 or self.l_max < 0:
            raise ConfigurationError("k_max and l_max must be non-negative")
        if self.k_hat_max < self.k_max:
            raise ConfigurationError("k_hat_max must be at least k_max")
        if (self.k_p - 2 * self.k_hat_max < 0
                or self.k_p + 2 * self.k_hat_max > cfg.N - 1):
            raise ConfigurationError(
                f"Doppler guard [{self.k_p - 2 * self.k_hat_max}, "
                f"{self.k_p + 2 * self.k_hat_max}] does not fit in "
                f"[0, {cfg.N - 1}] without wrapping")
        if self.l_p - self.l_max < 0 or self.l_p + self.l_max > cfg.M - 1:
            raise ConfigurationError(
                f"delay guard [{self.l_p - self.l_max}, "
                f"{self.l_p + self.l_max}] does not fit in [0, {cfg.M - 1}]")

    def guard_mask(self, cfg: FrameConfig) -> np.ndarray:
        """Boolean (N, M) mask of guard-plus-pilot cells (True = reserved)."""
        mask = np.zeros(cfg.grid_shape, dtype=bool)
        mask[self.k_p - 2 * self.k_hat_max:self.k_p + 2 * self.k_hat_max + 1,
             self.l_p - self.l_max:self.l_p + self.l_max + 1] = True
        return mask

    def pilot_grid(self, cfg: FrameConfig) -> np.ndarray:
        """Grid that is zero everywhere except x_p at the pilot cell."""
        grid = np.zeros(cfg.grid_shape, dtype=complex)
        grid[self.k_p, self.l_p] = self.x_p
        return grid


def embed_pilot(data: np.ndarray, layout: PilotLayout,
                cfg: FrameConfig) -> np.ndarray:
    """Overlay the pilot and its zero guard onto a data grid.

    Cells outside the guard region are passed through unchanged.
    """
    data = _check_grid(data, cfg, "data grid")
    layout.validate(cfg)
    out = data.copy()
    out[layout.guard_mask(cfg)] = 0.0
    out[layout.k_p, layout.l_p] = layout.x_p
    return out


def extract_observation(y_dd: np.ndarray, layout: PilotLayout,
                        cfg: FrameConfig) -> np.ndarray:
    """Cut the pilot observation window out of a received DD grid.

    Returns an (l_max + 1, 2*k_hat_max + 1) array whose row l and column c
    hold Y[(k_p - k_hat_max + c) mod N, (l_p + l) mod M]; no normalization.
    """
    y_dd = _check_grid(y_dd, cfg, "received grid")
    rows = (layout.l_p + np.arange(layout.l_max + 1)) % cfg.M
    cols = (layout.k_p - layout.k_hat_max
            + np.arange(2 * layout.k_hat_max + 1)) % cfg.N
    return y_dd[np.ix_(cols, rows)].T.copy()


def pilot_response(k_cand: int, layout: PilotLayout,
                   cfg: FrameConfig) -> np.ndarray:
    """Unit-gain observation-row signature of a path with Doppler k_cand.

    Column c of the observation window sees the pilot through the spreading
    coefficient at offset q = k_cand + k_hat_max - c, times the pilot-position
    phase e^{j2pi l_p k_cand/(NM)}; a path (gain h, delay l, Doppler k_cand)
    contributes exactly h * x_p times this vector to observation row l.
    """
    if abs(k_cand) > layout.k_max:
        raise ValueError(f"Doppler candidate {k_cand} outside +/-{layout.k_max}")
    cols = np.arange(2 * layout.k_hat_max + 1)
    phase = np.exp(2j * np.pi * layout.l_p * k_cand / (cfg.N * cfg.M))
    return phase * np.array(
        [doppler_spread(int(k_cand + layout.k_hat_max - c), k_cand, cfg)
         for c in cols])


def ml_estimate(obs: np.ndarray, layout: PilotLayout, cfg: FrameConfig,
                threshold: float) -> ChannelSpec:
    """Per-delay-bin ML estimation of (gain, Doppler), one path per bin.

    For each delay bin l the Doppler is found by brute force over the
    integer candidates [-k_max, k_max], maximizing

        L2(k) = |psi(k)^H y|^2 / ||psi(k)||^2

    (ties broken toward the smallest |k|), after which the gain follows as
    the least-squares fit h = psi^H y / (x_p ||psi||^2).  The path is kept
    only when |h| >= threshold, so an empty ChannelSpec is a valid result.
    """
    obs = np.asarray(obs, dtype=complex)
    expected = (layout.l_max + 1, 2 * layout.k_hat_max + 1)
    if obs.shape != expected:
        raise ConfigurationError(
            f"observation shape {obs.shape}, expected {expected}")
    candidates = sorted(range(-layout.k_max, layout.k_max + 1),
                        key=lambda k: (abs(k), k))
    signatures = {k: pilot_response(k, layout, cfg) for k in candidates}
    norms = {k: float(np.sum(np.abs(s) ** 2)) for k, s in signatures.items()}

    paths = []
    for l in range(layout.l_max + 1):
        y = obs[l]
        best_k, best_metric = None, -1.0
        for k in candidates:
            metric = abs(np.vdot(signatures[k], y)) ** 2 / norms[k]
            if metric > best_metric:
                best_k, best_metric = k, metric
        h = np.vdot(signatures[best_k], y) / (layout.x_p * norms[best_k])
        if abs(h) >= threshold:
            paths.append(PathSpec(gain=complex(h), delay_idx=l,
                                  doppler_idx=best_k))
    return ChannelSpec(paths)


def threshold_estimate(obs: np.ndarray, layout: PilotLayout, cfg: FrameConfig,
                       threshold: float) -> EffectiveChannel:
    """Baseline CE: read effective taps straight off the observation window.

    Every observation cell with magnitude >= threshold is treated as an
    on-grid tap at (Doppler offset, delay offset) with coefficient
    y / x_p (pilot-position phase divided out), and the taps are replicated
    over all output cells through the single-tap shift-invariant structure.
    Spread taps are therefore modeled as separate paths, which is exactly
    the baseline's blind spot.
    """
    obs = np.asarray(obs, dtype=complex)
    taps = []
    for l in range(layout.l_max + 1):
        for c in range(2 * layout.k_hat_max + 1):
            if abs(obs[l, c]) >= threshold:
                dk = c - layout.k_hat_max
                gain = (obs[l, c] / layout.x_p
                        * np.exp(-2j * np.pi * layout.l_p * dk / (cfg.N * cfg.M)))
                taps.append(PathSpec(gain=complex(gain), delay_idx=l,
                                     doppler_idx=dk))
    if not taps:
        return EffectiveChannel(
            doppler_shifts=np.array([], dtype=int),
            delay_shifts=np.array([], dtype=int),
            coeffs=np.zeros((0,) + cfg.grid_shape, dtype=complex),
            shape=cfg.grid_shape, source="estimated")
    eff = rcp_reference(ChannelSpec(taps), cfg, source="estimated")
    return eff
