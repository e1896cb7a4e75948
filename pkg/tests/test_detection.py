"""Constellation mapping and message-passing detector tests.

The Monte-Carlo regression values in TestRegression were measured once with
the pinned seeds below and frozen; the detector is deterministic for a given
seed, so drift indicates a behavioural change.
"""

import numpy as np
import pytest

from cpotfs import (ChannelSpec, Constellation, DetectionError, FrameConfig,
                    MPParams, PathSpec, PilotLayout, build_effective_channel,
                    data_mask, demap_bits, embed_pilot, map_bits, mp_detect,
                    predict_dd_output, run_chain, stream_rng)
from cpotfs.harness import draw_channel


def desk16():
    return FrameConfig.with_cp_samples(16, 16, 15e3, 4, 2, 3, 8)


class TestConstellation:
    @pytest.mark.parametrize("order", [4, 16, 64])
    def test_unit_energy(self, order):
        c = Constellation.qam(order)
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
        assert len(c.points) == order

    @pytest.mark.parametrize("order", [4, 16])
    def test_gray_neighbours_differ_in_one_bit(self, order):
        c = Constellation.qam(order)
        d_min = np.min([abs(a - b) for i, a in enumerate(c.points)
                        for b in c.points[i + 1:]])
        for i, a in enumerate(c.points):
            for j, b in enumerate(c.points):
                if i < j and abs(a - b) < d_min * 1.001:
                    assert bin(i ^ j).count("1") == 1

    def test_bit_round_trip(self):
        c = Constellation.qam(16)
        rng = np.random.default_rng(0)
        bits = rng.integers(0, 2, 400)
        idx = c.bits_to_indices(bits)
        np.testing.assert_array_equal(c.indices_to_bits(idx), bits)

    def test_nearest_recovers_points(self):
        c = Constellation.qam(4)
        noisy = c.points + 0.05 * (1 + 1j)
        np.testing.assert_array_equal(c.nearest(noisy), np.arange(4))

    def test_rejects_non_square(self):
        from cpotfs import ConfigurationError
        with pytest.raises(ConfigurationError):
            Constellation.qam(8)


class TestBitMapping:
    def test_round_trip(self):
        cfg = desk16()
        c = Constellation.qam(4)
        rng = np.random.default_rng(1)
        bits = rng.integers(0, 2, cfg.N * cfg.M * 2)
        grid = map_bits(bits, c, cfg)
        np.testing.assert_array_equal(demap_bits(grid, c, cfg), bits)

    def test_all_zero_bits_constant_grid(self):
        cfg = desk16()
        c = Constellation.qam(4)
        grid = map_bits(np.zeros(cfg.N * cfg.M * 2, dtype=int), c, cfg)
        assert np.all(grid == c.points[0])

    def test_layout_leaves_guard_empty(self):
        cfg = FrameConfig.with_cp_samples(32, 32, 15e3, 8, 5, 6, 4)
        layout = PilotLayout.for_config(cfg, k_max=3, l_max=2, x_p=6.0)
        c = Constellation.qam(4)
        mask = data_mask(cfg, layout)
        rng = np.random.default_rng(2)
        bits = rng.integers(0, 2, int(mask.sum()) * 2)
        grid = map_bits(bits, c, cfg, layout)
        assert not np.any(grid[~mask])
        np.testing.assert_array_equal(demap_bits(grid, c, cfg, layout), bits)

    def test_length_mismatch(self):
        cfg = desk16()
        with pytest.raises(ValueError):
            map_bits(np.zeros(10, dtype=int), Constellation.qam(4), cfg)


class TestMPDetect:
    def test_identity_channel_exact(self):
        cfg = desk16()
        c = Constellation.qam(4)
        rng = np.random.default_rng(3)
        bits = rng.integers(0, 2, cfg.N * cfg.M * 2)
        x = map_bits(bits, c, cfg)
        eff = build_effective_channel(ChannelSpec([PathSpec(1.0, 0, 0)]), cfg)
        res = mp_detect(x, eff, 0.0, c)  # noiseless: variance floor kicks in
        np.testing.assert_array_equal(res.bits, bits)
        assert res.converged

    def test_delayed_path_exact(self):
        cfg = desk16()
        c = Constellation.qam(4)
        rng = np.random.default_rng(4)
        bits = rng.integers(0, 2, cfg.N * cfg.M * 2)
        x = map_bits(bits, c, cfg)
        ch = ChannelSpec([PathSpec(1.0, 2, 0)])
        y = predict_dd_output(x, ch, cfg)
        res = mp_detect(y, build_effective_channel(ch, cfg), 1e-10, c)
        np.testing.assert_array_equal(res.bits, bits)

    def test_damping_invariant_on_identity(self):
        cfg = desk16()
        c = Constellation.qam(4)
        rng = np.random.default_rng(5)
        bits = rng.integers(0, 2, cfg.N * cfg.M * 2)
        x = map_bits(bits, c, cfg)
        eff = build_effective_channel(ChannelSpec([PathSpec(1.0, 0, 0)]), cfg)
        for damping in (1.0, 0.6):
            res = mp_detect(x + 0.05, eff, 1e-3, c,
                            MPParams(damping=damping))
            np.testing.assert_array_equal(res.bits, bits)

    def test_high_snr_multipath_exact(self):
        # well-conditioned desk-scale operator at >= 40 dB recovers exactly
        cfg = desk16()
        c = Constellation.qam(4)
        sigma2 = 1e-4
        for seed in range(3):
            ch = draw_channel({"type": "random", "n_bins": 3, "k_max": 7,
                               "l_max": 2}, cfg, stream_rng(seed, 0, "channel"))
            bits = stream_rng(seed, 0, "bits").integers(0, 2, cfg.N * cfg.M * 2)
            x = map_bits(bits, c, cfg)
            y = run_chain(x, ch, cfg, cfg.M * sigma2,
                          stream_rng(seed, 0, "noise"))
            res = mp_detect(y, build_effective_channel(ch, cfg), sigma2, c)
            np.testing.assert_array_equal(res.bits, bits)

    def test_known_cells_are_pinned_and_carry_no_bits(self):
        cfg = FrameConfig.with_cp_samples(32, 32, 15e3, 8, 5, 6, 4)
        c = Constellation.qam(4)
        layout = PilotLayout.for_config(cfg, k_max=3, l_max=2, x_p=6.0)
        rng = np.random.default_rng(6)
        n_data = int(data_mask(cfg, layout).sum())
        bits = rng.integers(0, 2, n_data * 2)
        x = embed_pilot(map_bits(bits, c, cfg, layout), layout, cfg)
        ch = ChannelSpec([PathSpec(0.9, 0, 2), PathSpec(0.4j, 1, -1)])
        y = run_chain(x, ch, cfg, cfg.M * 1e-4, rng)
        # full spreading window: at 40 dB the truncation residual would
        # otherwise dominate the noise
        res = mp_detect(y, build_effective_channel(ch, cfg, n_hat=cfg.N),
                        1e-4, c, known_mask=layout.guard_mask(cfg),
                        known_values=layout.pilot_grid(cfg))
        assert res.bits.size == n_data * 2
        np.testing.assert_array_equal(res.bits, bits)
        assert res.symbols[layout.k_p, layout.l_p] == layout.x_p

    def test_empty_operator_rejected(self):
        cfg = desk16()
        from cpotfs import EffectiveChannel
        empty = EffectiveChannel(
            doppler_shifts=np.array([], dtype=int),
            delay_shifts=np.array([], dtype=int),
            coeffs=np.zeros((0, 16, 16), dtype=complex),
            shape=(16, 16), source="estimated")
        with pytest.raises(DetectionError):
            mp_detect(np.zeros((16, 16)), empty, 1e-2, Constellation.qam(4))


def _mc_errors(master_seed, snr_db, frames, cfg, const, params):
    sigma2 = 10.0 ** (-snr_db / 10.0)
    spec = {"type": "random", "n_bins": 3, "k_max": 7, "l_max": 2}
    errors = total = 0
    for trial in range(frames):
        ch = draw_channel(spec, cfg, stream_rng(master_seed, trial, "channel"))
        bits = stream_rng(master_seed, trial, "bits").integers(
            0, 2, cfg.N * cfg.M * 2)
        x = map_bits(bits, const, cfg)
        y = run_chain(x, ch, cfg, cfg.M * sigma2,
                      stream_rng(master_seed, trial, "noise"))
        res = mp_detect(y, build_effective_channel(ch, cfg), sigma2, const,
                        params)
        errors += int(np.count_nonzero(res.bits != bits))
        total += bits.size
    return errors, total


class TestRegression:
    """Pinned Monte-Carlo values: 16x16, 3 random paths per frame, 4-QAM."""

    # (seed -> bit errors) at 20 dB over 200 frames (102400 bits), measured
    # once and frozen.  The across-seed spread is Poisson-limited (~50
    # errors), so the guarantees asserted are the pinned counts and the
    # bound, not a tight cross-seed band.
    PINNED_20DB = {1: 67, 2: 22, 3: 55}

    def test_pinned_values_and_mfb_bound(self):
        cfg = desk16()
        const = Constellation.qam(4)
        params = MPParams()
        snr_lin = 100.0
        # matched-filter bound of the no-diversity (single Rayleigh path)
        # QPSK system at 20 dB
        mfb = 0.5 * (1.0 - np.sqrt(snr_lin / (1.0 + snr_lin)))
        for seed, expected in self.PINNED_20DB.items():
            errors, total = _mc_errors(seed, 20.0, 200, cfg, const, params)
            assert total == 102400
            assert errors == expected
            assert errors / total < mfb

    def test_ber_monotone_in_snr(self):
        # >= 1e5 bits per point with common random numbers across points
        cfg = desk16()
        const = Constellation.qam(4)
        params = MPParams()
        bers = []
        for snr in (8.0, 10.0, 12.0, 14.0, 16.0):
            errors, total = _mc_errors(11, snr, 196, cfg, const, params)
            assert total >= 100_000
            bers.append(errors / total)
        assert all(a > b for a, b in zip(bers, bers[1:]))
