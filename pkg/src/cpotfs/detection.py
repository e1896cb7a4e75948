"""DD-domain symbol detection and bit mapping.

The detector runs Gaussian-approximation message passing on the sparse
linear model y = H x + w given by an :class:`~cpotfs.effective.EffectiveChannel`:
observation nodes treat the interference from all-but-one symbol as Gaussian
with matched mean and variance; variable nodes hold damped probability
vectors over the constellation.  Cells whose symbols are already known
(pilot and guard cells) are pinned to their known values with zero variance,
which cancels their contribution exactly.

Because the channel operator is a set of cyclic-shift taps, every message
update is a whole-grid array operation; no per-edge Python loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DetectionError

__all__ = [
    "Constellation", "MPParams", "DetectionResult", "mp_detect",
    "map_bits", "demap_bits", "data_mask",
]

# Variance floor keeping message variances finite on noiseless inputs.
NOISE_FLOOR = 1e-12


def _gray_decode(v: int) -> int:
    out = 0
    while v:
        out ^= v
        v >>= 1
    return out


@dataclass(frozen=True)
class Constellation:
    """Unit-average-energy constellation with Gray bit labels.

    ``points[i]`` is the symbol whose bit label is the binary expansion of i
    (MSB first); Gray coding is baked into the point ordering, so nearest
    neighbours along each axis differ in exactly one bit.
    """

    points: np.ndarray
    bits_per_symbol: int
    name: str = "qam"

    @classmethod
    def qam(cls, order: int = 4) -> "Constellation":
        """Square Gray-coded QAM of the given order (4, 16, 64, ...)."""
        b = int(np.log2(order))
        if 2 ** b != order or b % 2 != 0:
            raise ConfigurationError(f"order {order} is not an even power of 2")
        half = b // 2
        levels = 2 ** half
        pts = np.empty(order, dtype=complex)
        for label in range(order):
            i_lvl = _gray_decode(label >> half)
            q_lvl = _gray_decode(label & (levels - 1))
            pts[label] = complex(2 * i_lvl - (levels - 1),
                                 2 * q_lvl - (levels - 1))
        pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
        return cls(points=pts, bits_per_symbol=b, name=f"{order}-qam")

    def indices_to_bits(self, idx: np.ndarray) -> np.ndarray:
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return ((np.asarray(idx)[:, None] >> shifts) & 1).astype(np.int8).ravel()

    def bits_to_indices(self, bits: np.ndarray) -> np.ndarray:
        b = self.bits_per_symbol
        bits = np.asarray(bits).reshape(-1, b)
        weights = 1 << np.arange(b - 1, -1, -1)
        return bits @ weights

    def nearest(self, symbols: np.ndarray) -> np.ndarray:
        """Index of the nearest constellation point, elementwise."""
        flat = np.asarray(symbols, dtype=complex).ravel()
        idx = np.argmin(np.abs(flat[:, None] - self.points[None, :]), axis=1)
        return idx.reshape(np.shape(symbols))


@dataclass(frozen=True)
class MPParams:
    max_iters: int = 30
    damping: float = 0.6
    convergence_eps: float = 1e-6

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ConfigurationError("damping must lie in (0, 1]")
        if self.max_iters < 1 or self.convergence_eps < 0:
            raise ConfigurationError("invalid MP iteration parameters")


@dataclass
class DetectionResult:
    symbols: np.ndarray
    bits: np.ndarray
    converged: bool
    iterations: int


def data_mask(cfg, layout=None) -> np.ndarray:
    """Boolean (N, M) mask of data-bearing cells (guard/pilot excluded)."""
    if layout is None:
        return np.ones(cfg.grid_shape, dtype=bool)
    return ~layout.guard_mask(cfg)


def map_bits(bits: np.ndarray, constellation: Constellation, cfg,
             layout=None) -> np.ndarray:
    """Place Gray-mapped symbols on the data cells of a DD grid, row-major.

    When a pilot layout is given, guard cells carry no bits and stay zero
    (the pilot itself is added separately by embed_pilot).
    """
    mask = data_mask(cfg, layout)
    n_data = int(mask.sum())
    bits = np.asarray(bits)
    if bits.size != n_data * constellation.bits_per_symbol:
        raise ValueError(
            f"{bits.size} bits do not fill {n_data} data cells at "
            f"{constellation.bits_per_symbol} bits/symbol")
    grid = np.zeros(cfg.grid_shape, dtype=complex)
    grid[mask] = constellation.points[constellation.bits_to_indices(bits)]
    return grid


def demap_bits(grid: np.ndarray, constellation: Constellation, cfg,
               layout=None) -> np.ndarray:
    """Inverse of :func:`map_bits` via nearest-point decisions."""
    mask = data_mask(cfg, layout)
    return constellation.indices_to_bits(constellation.nearest(grid[mask]))


def _shift_indices(shape, dks, dls):
    """Gather indices realizing per-edge cyclic shifts in one fancy-index op.

    to_out[e] reads variable-centric arrays at output positions
    (k - dk_e, l - dl_e); to_var[e] reads output-centric arrays at variable
    positions (k' + dk_e, l' + dl_e).
    """
    n, m = shape
    kk, ll = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    dks = np.asarray(dks)[:, None, None]
    dls = np.asarray(dls)[:, None, None]
    ee = np.arange(len(dks))[:, None, None]
    to_out = (ee, (kk[None] - dks) % n, (ll[None] - dls) % m)
    to_var = (ee, (kk[None] + dks) % n, (ll[None] + dls) % m)
    return to_out, to_var


def mp_detect(y_dd: np.ndarray, eff, noise_var: float,
              constellation: Constellation, params: MPParams | None = None,
              known_mask: np.ndarray | None = None,
              known_values: np.ndarray | None = None) -> DetectionResult:
    """Message-passing symbol detection over the sparse DD-domain model.

    Parameters
    ----------
    y_dd : (N, M) received DD grid.
    eff : EffectiveChannel mapping transmitted to received grids.
    noise_var : complex noise variance (floored at 1e-12).
    constellation, params : symbol alphabet and MP controls.
    known_mask, known_values : optional (N, M) boolean mask and grid of cells
        whose transmitted values are known (pilot/guard); they are cancelled
        exactly and carry no output bits.

    Returns the decided symbol grid, the data-cell bits (row-major over the
    unknown cells), a convergence flag and the iteration count.  If the
    messages do not converge within max_iters the best (final) iterate is
    returned with ``converged=False``.
    """
    params = params or MPParams()
    y_dd = np.asarray(y_dd, dtype=complex)
    if y_dd.shape != eff.shape:
        raise ConfigurationError(
            f"received grid {y_dd.shape} does not match operator {eff.shape}")
    if eff.n_offsets == 0:
        raise DetectionError("channel operator has no taps")

    nv = max(float(noise_var), NOISE_FLOOR)
    A = constellation.points
    q_pts = len(A)
    abs_a2 = np.abs(A) ** 2
    to_out, to_var = _shift_indices(eff.shape, eff.doppler_shifts,
                                    eff.delay_shifts)
    H = eff.coeffs
    abs_h2 = np.abs(H) ** 2
    H_v = H[to_var]
    abs_h2_v = abs_h2[to_var]

    known = (np.zeros(eff.shape, dtype=bool) if known_mask is None
             else np.asarray(known_mask, dtype=bool))
    kv = (np.zeros(eff.shape, dtype=complex) if known_values is None
          else np.asarray(known_values, dtype=complex))
    data = ~known

    # per-edge symbol probabilities, variable-centric: P[a, e, k, l]
    prob = np.full((q_pts, eff.n_offsets) + eff.shape, 1.0 / q_pts)

    def edge_stats(p):
        m_v = np.tensordot(A, p, axes=(0, 0))
        v_v = np.tensordot(abs_a2, p, axes=(0, 0)) - np.abs(m_v) ** 2
        m_v[:, known] = kv[known]
        v_v[:, known] = 0.0
        return m_v, v_v

    def loglik(p):
        # log-likelihood L[a, e] each data cell receives from the observation
        # at offset e, using interference mean/variance that exclude it
        m_v, v_v = edge_stats(p)
        m_o = m_v[to_out]
        v_o = v_v[to_out]
        mtot = np.sum(H * m_o, axis=0)
        vtot = np.sum(abs_h2 * v_o, axis=0) + nv
        resid = (y_dd - mtot)[None] + H * m_o
        sig = vtot[None] - abs_h2 * v_o
        resid_v = resid[to_var]
        sig_v = np.maximum(sig[to_var], nv)
        # expand |resid - H a|^2 to avoid (Q, E, N, M) complex temporaries
        abs_r2 = resid_v.real ** 2 + resid_v.imag ** 2
        cross = np.conj(resid_v) * H_v
        ll = (abs_r2 + abs_h2_v * abs_a2[:, None, None, None]
              - 2.0 * (cross.real * A.real[:, None, None, None]
                       - cross.imag * A.imag[:, None, None, None]))
        return -ll / sig_v[None]

    converged = False
    iters = 0
    for iters in range(1, params.max_iters + 1):
        ll = loglik(prob)
        ll_tot = ll.sum(axis=1)
        ll_ex = ll_tot[:, None] - ll
        ll_ex -= ll_ex.max(axis=0)
        p_new = np.exp(ll_ex)
        p_new /= p_new.sum(axis=0)
        p_new = params.damping * p_new + (1.0 - params.damping) * prob
        delta = float(np.abs(p_new - prob)[:, :, data].max()) if data.any() else 0.0
        prob = p_new
        if delta < params.convergence_eps:
            converged = True
            break

    posterior = loglik(prob).sum(axis=1)
    idx = np.argmax(posterior, axis=0)
    symbols = A[idx]
    symbols[known] = kv[known]
    bits = constellation.indices_to_bits(idx[data])
    return DetectionResult(symbols=symbols, bits=bits, converged=converged,
                           iterations=iters)
