"""Frame configuration and the unitary delay-Doppler <-> time-frequency transforms.

Grids are plain complex ndarrays of shape (N, M): axis 0 is the Doppler
index k (or OFDM-symbol index n in the TF domain), axis 1 is the delay
index l (or subcarrier index m).  All grid indices are taken mod N / mod M
when they originate from channel shifts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = ["FrameConfig", "isfft", "sfft"]

# CP durations must sit on the sample grid to within this many samples.
_CP_SNAP_TOL = 1e-6


@dataclass(frozen=True)
class FrameConfig:
    """Static numerology of one OTFS frame.

    Parameters
    ----------
    M : int
        Number of delay bins / subcarriers.
    N : int
        Number of Doppler bins / OFDM symbols per frame.
    delta_f : float
        Subcarrier spacing in Hz.
    S : int
        OFDM symbols per time window (the first symbol of each window
        carries the long CP).  N must be a multiple of S.
    T_cp_reg : float
        Regular CP duration in seconds.
    T_cp_long : float
        Long CP duration in seconds (>= T_cp_reg).
    N_hat : int
        Doppler-spread truncation window (positive even, <= N).

    CP durations must be integer multiples of the sample period Ts = T/M;
    other values are rejected because the discrete-time transmitter and the
    CP-stripping sampler need integer sample offsets.
    """

    M: int
    N: int
    delta_f: float
    S: int
    T_cp_reg: float
    T_cp_long: float
    N_hat: int

    def __post_init__(self):
        if self.M < 1 or self.N < 1 or self.S < 1:
            raise ConfigurationError("M, N and S must be positive integers")
        if self.N % self.S != 0:
            raise ConfigurationError(
                f"N={self.N} must be an integer multiple of S={self.S}")
        if self.delta_f <= 0:
            raise ConfigurationError("delta_f must be positive")
        if self.T_cp_reg < 0 or self.T_cp_long < self.T_cp_reg:
            raise ConfigurationError(
                "CP durations must satisfy 0 <= T_cp_reg <= T_cp_long")
        if self.N_hat <= 0 or self.N_hat > self.N or self.N_hat % 2 != 0:
            raise ConfigurationError(
                f"N_hat={self.N_hat} must be a positive even integer <= N")
        for name in ("T_cp_reg", "T_cp_long"):
            samples = getattr(self, name) / self.Ts
            if abs(samples - round(samples)) > _CP_SNAP_TOL:
                raise ConfigurationError(
                    f"{name}={getattr(self, name):.6g} s is not an integer "
                    f"multiple of the sample period Ts={self.Ts:.6g} s")
            # canonicalize to the exact grid value so equal schedules compare
            # equal regardless of how the duration was expressed
            object.__setattr__(self, name, round(samples) * self.Ts)

    # -- derived quantities -------------------------------------------------

    @property
    def T(self) -> float:
        """OFDM symbol body duration 1/delta_f in seconds."""
        return 1.0 / self.delta_f

    @property
    def Ts(self) -> float:
        """Sample period T/M in seconds (critical sampling at M*delta_f)."""
        return self.T / self.M

    @property
    def psi_reg(self) -> float:
        """Regular CP duration normalized by the symbol body T."""
        return self.T_cp_reg / self.T

    @property
    def psi_ext(self) -> float:
        """Excess long-CP duration (T_cp_long - T_cp_reg) normalized by T."""
        return (self.T_cp_long - self.T_cp_reg) / self.T

    @property
    def cp_samples_reg(self) -> int:
        return round(self.T_cp_reg / self.Ts)

    @property
    def cp_samples_long(self) -> int:
        return round(self.T_cp_long / self.Ts)

    def cp_samples(self, n: int) -> int:
        """CP sample count of symbol n: long when n is a window leader."""
        if not 0 <= n < self.N:
            raise IndexError(f"symbol index {n} outside [0, {self.N})")
        return self.cp_samples_long if n % self.S == 0 else self.cp_samples_reg

    @property
    def frame_samples(self) -> int:
        """Total stream length: N*M body samples plus all CPs."""
        n_long = self.N // self.S
        return (self.N * self.M + n_long * self.cp_samples_long
                + (self.N - n_long) * self.cp_samples_reg)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.N, self.M)

    # -- constructors --------------------------------------------------------

    @classmethod
    def with_cp_samples(cls, M, N, delta_f, S, cp_reg_samples, cp_long_samples,
                        N_hat) -> "FrameConfig":
        """Build a config with CP lengths given directly in samples."""
        Ts = 1.0 / (delta_f * M)
        return cls(M=M, N=N, delta_f=delta_f, S=S,
                   T_cp_reg=cp_reg_samples * Ts,
                   T_cp_long=cp_long_samples * Ts, N_hat=N_hat)

    @classmethod
    def from_cp_ratio(cls, M, N, delta_f, S, T_cp_reg, cp_ratio,
                      N_hat) -> "FrameConfig":
        """Snap a requested regular CP duration and long/regular ratio to the
        sample grid: T_cp_reg rounds to the nearest sample count and the long
        CP becomes round(ratio * reg_samples) samples."""
        Ts = 1.0 / (delta_f * M)
        reg = round(T_cp_reg / Ts)
        long_ = round(cp_ratio * reg)
        return cls.with_cp_samples(M, N, delta_f, S, reg, long_, N_hat)

    @classmethod
    def from_dict(cls, d: dict) -> "FrameConfig":
        """Load from a mapping with keys matching the field names.

        Durations (T_cp_reg, T_cp_long) are expressed in microseconds.
        """
        try:
            return cls(M=int(d["M"]), N=int(d["N"]),
                       delta_f=float(d["delta_f"]), S=int(d["S"]),
                       T_cp_reg=float(d["T_cp_reg"]) * 1e-6,
                       T_cp_long=float(d["T_cp_long"]) * 1e-6,
                       N_hat=int(d["N_hat"]))
        except KeyError as e:
            raise ConfigurationError(f"missing frame config key {e}") from e

    @classmethod
    def from_json(cls, path) -> "FrameConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return {"M": self.M, "N": self.N, "delta_f": self.delta_f,
                "S": self.S, "T_cp_reg": self.T_cp_reg * 1e6,
                "T_cp_long": self.T_cp_long * 1e6, "N_hat": self.N_hat}


def _check_grid(x: np.ndarray, cfg: FrameConfig, what: str) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != cfg.grid_shape:
        raise ConfigurationError(
            f"{what} has shape {x.shape}, expected {cfg.grid_shape}")
    return x.astype(complex, copy=False)


def isfft(x_dd: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Map a delay-Doppler grid to the time-frequency grid (unitary).

    X_TF[n, m] = (1/sqrt(MN)) sum_{k,l} X_DD[k, l] e^{j2pi(nk/N - ml/M)}
    """
    x_dd = _check_grid(x_dd, cfg, "DD grid")
    return np.fft.fft(np.fft.ifft(x_dd, axis=0), axis=1) * np.sqrt(cfg.N / cfg.M)


def sfft(y_tf: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Map a time-frequency grid to the delay-Doppler grid; exact inverse
    of :func:`isfft`."""
    y_tf = _check_grid(y_tf, cfg, "TF grid")
    return np.fft.ifft(np.fft.fft(y_tf, axis=0), axis=1) * np.sqrt(cfg.M / cfg.N)
