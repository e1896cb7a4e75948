"""Effective delay-Doppler channel: Doppler spreading and sparse operators.

With per-symbol CPs the receive grid is not a plain 2D circular convolution
of the transmit grid: every path with nonzero Doppler k_i leaks onto
neighbouring Doppler bins.  The leakage weights form the spreading function
G(q, k_i) so that, for paths on the grid,

    Y[k, l] = sum_i h_i e^{j2pi (l - l_i) k_i / (NM)}
              * sum_q G(q, k_i) X[(k - k_i + q) mod N, (l - l_i) mod M]

which is exact when q runs over a full period (n_hat = N) and a good sparse
approximation when q is truncated to [-n_hat/2, n_hat/2).  The unequal CP
schedule (long CP every S symbols) enters through psi_reg and psi_ext; with
psi_ext = 0 the expression collapses to the equal-CP special case.

An :class:`EffectiveChannel` stores the resulting operator as a set of
cyclic-shift taps: tap e maps input ((k - dk_e) mod N, (l - dl_e) mod M) to
output (k, l) with a per-output-cell coefficient grid.  This keeps matrix
application, CSV export and message-passing detection vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .channel import ChannelSpec
from .errors import ConfigurationError
from .frame import FrameConfig, _check_grid

__all__ = [
    "doppler_spread", "doppler_spread_direct", "doppler_spread_equal_cp",
    "spread_window", "predict_dd_output", "EffectiveChannel",
    "build_effective_channel", "rcp_reference", "sparsity_metrics",
    "SparsityMetrics",
]

# Treat a geometric-ratio denominator angle within this of 0 (mod 2pi) as the
# removable 0/0 point and substitute the analytic limit.
_SINGULARITY_TOL = 1e-9


def _geom_ratio(theta: float, r: int) -> complex:
    """(e^{-j r theta} - 1) / (e^{-j theta} - 1) with its limit r at theta = 0
    (mod 2pi); equals the geometric sum sum_{t=0}^{r-1} e^{-j theta t}."""
    w = np.mod(theta, 2.0 * np.pi)
    if w > np.pi:
        w -= 2.0 * np.pi
    if abs(w) < _SINGULARITY_TOL:
        return complex(r)
    return (np.exp(-1j * r * theta) - 1.0) / (np.exp(-1j * theta) - 1.0)


def doppler_spread(q: int, k_i: int, cfg: FrameConfig) -> complex:
    """Closed-form Doppler spreading coefficient G(q, k_i) for the unequal-CP
    schedule (long CP every S symbols).

    For k_i == 0 it is the Kronecker delta in q.  Otherwise it is a product
    of two geometric-sum ratios whose 0/0 resonance points are replaced by
    their analytic limits.  Periodic in q with period N.
    """
    if k_i == 0:
        return 1.0 + 0.0j if q == 0 else 0.0 + 0.0j
    n, s = cfg.N, cfg.S
    a = -q - k_i * (cfg.psi_reg + cfg.psi_ext / s)
    b = -q - k_i * cfg.psi_reg
    f_windows = _geom_ratio(2.0 * np.pi * s / n * a, n // s)
    f_within = _geom_ratio(2.0 * np.pi / n * b, s) / n
    return f_windows * f_within


def doppler_spread_direct(q: int, k_i: int, cfg: FrameConfig) -> complex:
    """Ground-truth spreading coefficient as the direct N-term sum

        (1/N) sum_n e^{j (2pi/N) (n q + k_i (n psi_reg + floor(n/S) psi_ext))}

    i.e. without the geometric-series simplification.  Used as the oracle
    for :func:`doppler_spread`.
    """
    n = np.arange(cfg.N)
    cp_accum = n * cfg.psi_reg + (n // cfg.S) * cfg.psi_ext
    return complex(np.mean(np.exp(2j * np.pi / cfg.N * (n * q + k_i * cp_accum))))


def doppler_spread_equal_cp(q: int, k_i: int, cfg: FrameConfig) -> complex:
    """Spreading coefficient when every CP has the regular length
    (the psi_ext = 0 special case), in its single-ratio closed form."""
    if k_i == 0:
        return 1.0 + 0.0j if q == 0 else 0.0 + 0.0j
    theta = -2.0 * np.pi / cfg.N * (q + k_i * cfg.psi_reg)
    return _geom_ratio(theta, cfg.N) / cfg.N


def spread_window(cfg: FrameConfig, n_hat: int | None = None) -> np.ndarray:
    """Doppler offsets q retained per path: [-n_hat/2, n_hat/2)."""
    n_hat = cfg.N_hat if n_hat is None else n_hat
    if n_hat <= 0 or n_hat > cfg.N:
        raise ConfigurationError(f"n_hat={n_hat} outside (0, {cfg.N}]")
    return np.arange(-(n_hat // 2), n_hat - n_hat // 2)


def _path_spread(k_i: int, cfg: FrameConfig, qs: np.ndarray,
                 assume_equal_cp: bool) -> np.ndarray:
    fn = doppler_spread_equal_cp if assume_equal_cp else doppler_spread
    return np.array([fn(int(q), k_i, cfg) for q in qs])


def _delay_phase(l_i: int, k_i: int, cfg: FrameConfig) -> np.ndarray:
    # e^{j2pi (l - l_i) k_i / (NM)} over output delay columns; the exponent
    # uses the raw (un-wrapped) l - l_i, which is what the exact derivation
    # produces for l < l_i as well.
    l_out = np.arange(cfg.M)
    return np.exp(2j * np.pi * (l_out - l_i) * k_i / (cfg.N * cfg.M))


def predict_dd_output(x_dd: np.ndarray, ch: ChannelSpec, cfg: FrameConfig,
                      n_hat: int | None = None,
                      assume_equal_cp: bool = False) -> np.ndarray:
    """Predict the noiseless received DD grid from the spreading model.

    With ``n_hat = N`` the prediction is exact for the discrete-time chain
    (modulate -> channel -> demodulate) on ISI-free on-grid channels; smaller
    windows trade accuracy for sparsity.
    """
    x_dd = _check_grid(x_dd, cfg, "DD grid")
    ch.validate(cfg)
    qs = spread_window(cfg, n_hat)
    y = np.zeros(cfg.grid_shape, dtype=complex)
    for p in ch.paths:
        g = _path_spread(p.doppler_idx, cfg, qs, assume_equal_cp)
        base = np.roll(x_dd, p.delay_idx, axis=1)
        acc = np.zeros(cfg.grid_shape, dtype=complex)
        for gq, q in zip(g, qs):
            if gq != 0:
                acc += gq * np.roll(base, p.doppler_idx - int(q), axis=0)
        y += p.gain * _delay_phase(p.delay_idx, p.doppler_idx, cfg)[None, :] * acc
    return y


@dataclass
class EffectiveChannel:
    """Sparse DD-domain operator as cyclic-shift taps.

    Tap e maps input ((k - doppler_shifts[e]) mod N, (l - delay_shifts[e]) mod M)
    to output (k, l) with coefficient coeffs[e, k, l].  Offsets are unique, so
    there is at most one entry per (output, input) index pair.
    """

    doppler_shifts: np.ndarray
    delay_shifts: np.ndarray
    coeffs: np.ndarray
    shape: tuple[int, int]
    source: str = "theorem1"

    @property
    def n_offsets(self) -> int:
        return len(self.doppler_shifts)

    def tap_count(self) -> int:
        """Number of nonzero (output, input) entries."""
        return int(np.count_nonzero(self.coeffs))

    def apply(self, x_dd: np.ndarray) -> np.ndarray:
        """Apply the operator to a DD grid."""
        x_dd = np.asarray(x_dd, dtype=complex)
        if x_dd.shape != self.shape:
            raise ConfigurationError(
                f"grid shape {x_dd.shape} does not match operator {self.shape}")
        y = np.zeros(self.shape, dtype=complex)
        for e in range(self.n_offsets):
            y += self.coeffs[e] * np.roll(
                x_dd, (self.doppler_shifts[e], self.delay_shifts[e]), axis=(0, 1))
        return y

    def as_sparse(self) -> scipy.sparse.csr_matrix:
        """The NM x NM matrix acting on row-major vectorized grids."""
        n, m = self.shape
        kk, ll = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
        rows, cols, data = [], [], []
        for e in range(self.n_offsets):
            in_k = (kk - self.doppler_shifts[e]) % n
            in_l = (ll - self.delay_shifts[e]) % m
            keep = self.coeffs[e] != 0
            rows.append((kk * m + ll)[keep])
            cols.append((in_k * m + in_l)[keep])
            data.append(self.coeffs[e][keep])
        return scipy.sparse.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n * m, n * m))

    def impulse_response(self, k0: int | None = None, l0: int | None = None) -> np.ndarray:
        """Magnitude grid of the response to a unit impulse at (k0, l0),
        normalized to unit peak."""
        n, m = self.shape
        k0 = n // 2 if k0 is None else k0
        l0 = m // 2 if l0 is None else l0
        x = np.zeros(self.shape, dtype=complex)
        x[k0, l0] = 1.0
        resp = np.abs(self.apply(x))
        peak = resp.max()
        return resp / peak if peak > 0 else resp

    def to_csv(self, path) -> None:
        """Export nonzero taps as rows (out_k, out_l, in_k, in_l, re, im)."""
        n, m = self.shape
        with open(path, "w", newline="") as f:
            f.write("out_k,out_l,in_k,in_l,re,im\n")
            for e in range(self.n_offsets):
                dk = int(self.doppler_shifts[e])
                dl = int(self.delay_shifts[e])
                ks, ls = np.nonzero(self.coeffs[e])
                for k, l in zip(ks, ls):
                    c = self.coeffs[e, k, l]
                    f.write(f"{k},{l},{(k - dk) % n},{(l - dl) % m},"
                            f"{float(c.real)!r},{float(c.imag)!r}\n")


def _assemble(offset_grids: dict, shape, source: str) -> EffectiveChannel:
    offsets = sorted(offset_grids)
    dks, dls, grids = [], [], []
    for off in offsets:
        grid = offset_grids[off]
        if not np.any(grid):
            continue
        dks.append(off[0])
        dls.append(off[1])
        grids.append(grid)
    return EffectiveChannel(
        doppler_shifts=np.array(dks, dtype=int),
        delay_shifts=np.array(dls, dtype=int),
        coeffs=np.array(grids) if grids else np.zeros((0,) + tuple(shape), complex),
        shape=tuple(shape), source=source)


def build_effective_channel(ch: ChannelSpec, cfg: FrameConfig,
                            n_hat: int | None = None,
                            assume_equal_cp: bool = False) -> EffectiveChannel:
    """Arrange the spreading-model coefficients as a sparse operator.

    Applying the result to a grid equals :func:`predict_dd_output` with the
    same window.  ``assume_equal_cp`` builds the operator a receiver would
    use if it ignored the long CPs (the equal-CP spreading coefficients with
    the same psi_reg), which is the mismatched-detection baseline.
    """
    ch.validate(cfg)
    qs = spread_window(cfg, n_hat)
    n, m = cfg.grid_shape
    offset_grids: dict[tuple[int, int], np.ndarray] = {}
    for p in ch.paths:
        g = _path_spread(p.doppler_idx, cfg, qs, assume_equal_cp)
        phase = p.gain * _delay_phase(p.delay_idx, p.doppler_idx, cfg)
        for gq, q in zip(g, qs):
            if gq == 0:
                continue
            off = ((p.doppler_idx - int(q)) % n, p.delay_idx % m)
            grid = np.broadcast_to(gq * phase[None, :], (n, m)).copy()
            if off in offset_grids:
                offset_grids[off] += grid
            else:
                offset_grids[off] = grid
    source = "corollary1" if assume_equal_cp else "theorem1"
    return _assemble(offset_grids, cfg.grid_shape, source)


def rcp_reference(ch: ChannelSpec, cfg: FrameConfig,
                  source: str = "rcp-reference") -> EffectiveChannel:
    """Single-tap-per-path reference operator (one CP for the whole frame),
    used for the sparsity comparison: no Doppler spreading, each path maps
    output (k, l) to input ((k - k_i) mod N, (l - l_i) mod M)."""
    ch.validate(cfg, require_cp_cover=False)
    n, m = cfg.grid_shape
    offset_grids: dict[tuple[int, int], np.ndarray] = {}
    for p in ch.paths:
        off = (p.doppler_idx % n, p.delay_idx % m)
        grid = np.broadcast_to(
            p.gain * _delay_phase(p.delay_idx, p.doppler_idx, cfg)[None, :],
            (n, m)).copy()
        if off in offset_grids:
            offset_grids[off] += grid
        else:
            offset_grids[off] = grid
    return _assemble(offset_grids, cfg.grid_shape, source)


@dataclass
class SparsityMetrics:
    tap_count: int
    taps_above_threshold: int
    response: np.ndarray = field(repr=False)

    def support_count(self, threshold: float) -> int:
        """Cells of the normalized impulse response at or above threshold."""
        return int(np.count_nonzero(self.response >= threshold))


def sparsity_metrics(eff: EffectiveChannel, threshold: float,
                     k0: int | None = None, l0: int | None = None) -> SparsityMetrics:
    """Tap counts and the peak-normalized impulse-response magnitude grid."""
    return SparsityMetrics(
        tap_count=eff.tap_count(),
        taps_above_threshold=int(np.count_nonzero(np.abs(eff.coeffs) >= threshold)),
        response=eff.impulse_response(k0, l0))
