"""Discrete-time CP-OTFS transmitter and receiver front end.

The transmitter emits, per OFDM symbol, the CP followed by the M-sample
body at sample rate M*delta_f.  Symbols within a time window of S share the
regular CP; each window leader (n mod S == 0) carries the long CP.

Time convention: the frame's time origin (t = 0) is the first *body*
sample of symbol 0, so the leading long CP occupies negative time.  This is
the same convention the receive sampler uses to address samples, and it is
what makes the effective-channel predictions exact.  Stream sample j sits
at t = (j - time_origin_samples(cfg)) * Ts.
"""

from __future__ import annotations

import numpy as np

from .errors import FramingError
from .frame import FrameConfig, _check_grid

__all__ = [
    "cp_duration", "modulate", "demodulate", "stream_length",
    "time_origin_samples", "write_iq", "read_iq",
]


def cp_duration(n: int, cfg: FrameConfig) -> float:
    """CP duration in seconds of symbol n (long when n mod S == 0)."""
    if not 0 <= n < cfg.N:
        raise IndexError(f"symbol index {n} outside [0, {cfg.N})")
    return cfg.T_cp_long if n % cfg.S == 0 else cfg.T_cp_reg


def stream_length(cfg: FrameConfig) -> int:
    """Number of samples in one modulated frame."""
    return cfg.frame_samples


def time_origin_samples(cfg: FrameConfig) -> int:
    """Stream index of t = 0 (the first body sample of symbol 0)."""
    return cfg.cp_samples(0)


def modulate(x_tf: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Generate the CP-OTFS sample stream from a time-frequency grid.

    Body sample s of symbol n equals sum_m X_TF[n, m] e^{j2pi m s / M};
    each symbol is prefixed by its last cp_samples(n) body samples.
    """
    x_tf = _check_grid(x_tf, cfg, "TF grid")
    pieces = []
    for n in range(cfg.N):
        body = np.fft.ifft(x_tf[n]) * cfg.M
        cp = cfg.cp_samples(n)
        if cp:
            pieces.append(body[-cp:])
        pieces.append(body)
    return np.concatenate(pieces)


def demodulate(rx: np.ndarray, cfg: FrameConfig, normalized: bool = True) -> np.ndarray:
    """Strip CPs and DFT each symbol body back to the time-frequency grid.

    The raw per-symbol DFT sum carries a gain of M over the transmit side;
    with ``normalized=True`` (the default) a 1/M is folded in so that the
    identity channel reproduces the transmitted grid exactly.
    """
    rx = np.asarray(rx)
    if rx.shape != (cfg.frame_samples,):
        raise FramingError(
            f"stream has {rx.shape} samples, expected ({cfg.frame_samples},)")
    y = np.empty(cfg.grid_shape, dtype=complex)
    pos = 0
    for n in range(cfg.N):
        pos += cfg.cp_samples(n)
        y[n] = np.fft.fft(rx[pos:pos + cfg.M])
        pos += cfg.M
    if normalized:
        y /= cfg.M
    return y


def write_iq(stream: np.ndarray, path) -> None:
    """Export a sample stream as little-endian interleaved float64 I/Q."""
    stream = np.asarray(stream, dtype=complex)
    iq = np.empty(2 * stream.size, dtype="<f8")
    iq[0::2] = stream.real
    iq[1::2] = stream.imag
    iq.tofile(path)


def read_iq(path) -> np.ndarray:
    """Read a stream written by :func:`write_iq`."""
    iq = np.fromfile(path, dtype="<f8")
    if iq.size % 2 != 0:
        raise FramingError(f"I/Q file {path} has an odd number of floats")
    return iq[0::2] + 1j * iq[1::2]
