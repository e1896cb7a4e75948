"""Experiment orchestration: seeded Monte-Carlo loops and CSV/JSON emission.

SNR conventions (used by every experiment here):

* Data SNR is defined in the DD domain: unit-energy constellation, channels
  normalized to unit mean power, DD-domain noise variance
  sigma_n^2 = 10^(-SNR/10).  Time-domain noise applied by the channel has
  variance M * sigma_n^2, which the receive DFT folds back to sigma_n^2 per
  DD cell.
* Pilot SNR scales only the pilot: |x_p|^2 = SNR_p * sigma_n^2 (with
  sigma_n = 1 as reference when running noiseless).
* The CE detection threshold defaults to 3/sqrt(SNR_p) on the estimated
  gain, i.e. three standard deviations of the ML gain estimate; the
  threshold baseline applies the equivalent 3-sigma rule |y| >= T * |x_p|
  to raw observation cells.

Reproducibility: every random quantity is drawn from a generator derived
from (master seed, trial index, stream name), so reruns are byte-identical
and adding a method never perturbs existing streams.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channel as chmod
from .channel import ChannelSpec, EVA_PROFILE, gen_eva
from .detection import Constellation, MPParams, map_bits, mp_detect
from .effective import build_effective_channel, predict_dd_output, rcp_reference
from .errors import ConfigurationError, DetectionError
from .estimation import (PilotLayout, embed_pilot, extract_observation,
                         ml_estimate, threshold_estimate)
from .frame import FrameConfig, isfft, sfft
from .waveform import demodulate, modulate, time_origin_samples

__all__ = [
    "ExperimentConfig", "stream_rng", "run_chain", "run_ior_validate",
    "run_ber_sweep", "run_ce_compare", "run_channel_response",
    "default_config",
]


def stream_rng(master_seed: int, trial: int, name: str) -> np.random.Generator:
    """Independent generator for one named stream of one trial."""
    digest = hashlib.sha256(name.encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(
        np.random.SeedSequence([master_seed & 0xFFFFFFFF, trial] + words))


def run_chain(x_dd: np.ndarray, ch: ChannelSpec, cfg: FrameConfig,
              noise_var_time: float, rng: np.random.Generator) -> np.ndarray:
    """Full transmit/receive chain: ISFFT, modulate, channel, demodulate, SFFT.

    The channel is referenced to the frame's time origin (first body sample
    of symbol 0), which is what makes the spreading-model prediction exact.
    ``noise_var_time`` is the per-sample time-domain noise variance.
    """
    tx = modulate(isfft(x_dd, cfg), cfg)
    rx = chmod.apply(tx, ch, cfg, noise_var_time, rng,
                     t0_samples=-time_origin_samples(cfg))
    return sfft(demodulate(rx, cfg), cfg)


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass
class ExperimentConfig:
    """Everything one experiment needs, JSON-loadable for the CLI."""

    frame: FrameConfig
    channel: dict
    snr_db: tuple = (8.0, 11.0, 14.0)
    snr_p_db: float = 30.0
    trials: int = 10
    seed: int = 20260809
    cp_ratios: tuple = (1.2, 1.8)
    detector: MPParams = field(default_factory=MPParams)
    detector_modes: tuple = ("theorem1", "equal-cp-assumed")
    kind: str = ""

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if len(self.snr_db) == 0:
            raise ConfigurationError("snr_db must be nonempty")
        self.snr_db = tuple(float(s) for s in self.snr_db)
        self.cp_ratios = tuple(float(r) for r in self.cp_ratios)

    def to_dict(self) -> dict:
        return {"frame": self.frame.to_dict(), "channel": self.channel,
                "snr_db": list(self.snr_db), "snr_p_db": self.snr_p_db,
                "trials": self.trials, "seed": self.seed,
                "cp_ratios": list(self.cp_ratios),
                "detector": {"max_iters": self.detector.max_iters,
                             "damping": self.detector.damping,
                             "convergence_eps": self.detector.convergence_eps},
                "detector_modes": list(self.detector_modes),
                "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        det = d.get("detector", {})
        return cls(frame=FrameConfig.from_dict(d["frame"]),
                   channel=d["channel"],
                   snr_db=tuple(d.get("snr_db", (8.0, 11.0, 14.0))),
                   snr_p_db=float(d.get("snr_p_db", 30.0)),
                   trials=int(d.get("trials", 10)),
                   seed=int(d.get("seed", 20260809)),
                   cp_ratios=tuple(d.get("cp_ratios", (1.2, 1.8))),
                   detector=MPParams(
                       max_iters=int(det.get("max_iters", 30)),
                       damping=float(det.get("damping", 0.6)),
                       convergence_eps=float(det.get("convergence_eps", 1e-6))),
                   detector_modes=tuple(d.get(
                       "detector_modes", ("theorem1", "equal-cp-assumed"))),
                   kind=d.get("kind", ""))

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def draw_channel(spec: dict, cfg: FrameConfig,
                 rng: np.random.Generator) -> ChannelSpec:
    """Realize the experiment's channel source for one trial."""
    kind = spec.get("type", "random")
    if kind == "eva":
        return gen_eva(cfg, float(spec["carrier_hz"]), float(spec["speed_kmh"]),
                       rng)
    if kind == "explicit":
        return ChannelSpec.from_dict(spec)
    if kind == "random":
        n_bins = int(spec["n_bins"])
        k_max, l_max = int(spec["k_max"]), int(spec["l_max"])
        delays = np.sort(rng.choice(l_max + 1, size=n_bins, replace=False))
        dopplers = rng.integers(-k_max, k_max + 1, size=n_bins)
        gains = chmod.awgn(n_bins, 1.0 / n_bins, rng)
        return ChannelSpec([chmod.PathSpec(complex(g), int(d), int(k))
                            for g, d, k in zip(gains, delays, dopplers)])
    raise ConfigurationError(f"unknown channel source type {kind!r}")


def channel_bounds(spec: dict, cfg: FrameConfig) -> tuple[int, int]:
    """(k_max, l_max) bounds of the experiment's channel source."""
    kind = spec.get("type", "random")
    if kind == "eva":
        nu_max = (float(spec["carrier_hz"]) * float(spec["speed_kmh"]) / 3.6
                  / chmod.SPEED_OF_LIGHT)
        bins = np.round(np.asarray(EVA_PROFILE.delays_ns) * 1e-9
                        * cfg.M * cfg.delta_f).astype(int)
        return round(nu_max * cfg.N * cfg.T), int(bins.max())
    if kind == "explicit":
        ch = ChannelSpec.from_dict(spec)
        return (max(abs(p.doppler_idx) for p in ch.paths),
                max(p.delay_idx for p in ch.paths))
    return int(spec["k_max"]), int(spec["l_max"])


def _frame_with_ratio(frame: FrameConfig, ratio: float) -> FrameConfig:
    reg = frame.cp_samples_reg
    return FrameConfig.with_cp_samples(frame.M, frame.N, frame.delta_f,
                                       frame.S, reg, round(ratio * reg),
                                       frame.N_hat)


# ---------------------------------------------------------------------------
# CSV / run.json emission


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def write_csv(path, fieldnames, rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(fieldnames) + "\n")
        for r in rows:
            f.write(",".join(_fmt(r[k]) for k in fieldnames) + "\n")


def write_grid_csv(path, grid: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        for row in np.asarray(grid):
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def _emit(out_dir, ec: ExperimentConfig, files: dict, summary: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, (fieldnames, rows) in files.items():
        write_csv(out / name, fieldnames, rows)
    run_info = {"kind": ec.kind, "config": ec.to_dict(),
                "outputs": sorted(files), "summary": summary}
    with open(out / "run.json", "w") as f:
        json.dump(run_info, f, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# experiments


def run_ior_validate(ec: ExperimentConfig, out_dir=None) -> dict:
    """Compare the spreading-model prediction against the noiseless waveform
    chain, per trial, at the full window (exact) and the configured window."""
    ec.kind = "ior-validate"
    cfg = ec.frame
    const = Constellation.qam(4)
    rows = []
    for trial in range(ec.trials):
        ch = draw_channel(ec.channel, cfg, stream_rng(ec.seed, trial, "channel"))
        bits = stream_rng(ec.seed, trial, "bits").integers(
            0, 2, cfg.N * cfg.M * const.bits_per_symbol)
        x = map_bits(bits, const, cfg)
        y = run_chain(x, ch, cfg, 0.0, stream_rng(ec.seed, trial, "noise"))
        pred_full = predict_dd_output(x, ch, cfg, n_hat=cfg.N)
        pred_trunc = predict_dd_output(x, ch, cfg)
        scale = np.linalg.norm(y)
        rows.append({
            "trial": trial,
            "max_abs_err_full": float(np.abs(y - pred_full).max()),
            "rel_fro_err_full": float(np.linalg.norm(y - pred_full) / scale),
            "rel_fro_err_truncated": float(np.linalg.norm(y - pred_trunc) / scale),
        })
    worst = max(r["rel_fro_err_full"] for r in rows)
    summary = {"max_rel_fro_err_full": worst,
               "max_rel_fro_err_truncated":
                   max(r["rel_fro_err_truncated"] for r in rows),
               "n_hat": cfg.N_hat,
               "ok": bool(worst <= 1e-9)}
    if out_dir is not None:
        _emit(out_dir, ec, {"ior_validate.csv": (list(rows[0]), rows)}, summary)
    return {"rows": rows, "summary": summary}


def _detect_bits(y, eff, noise_var, const, params, known_mask=None,
                 known_values=None, n_bits=None):
    # An empty operator means the estimator found nothing: score the frame
    # as random guessing (half the bits wrong) rather than crashing the sweep.
    try:
        return mp_detect(y, eff, noise_var, const, params,
                         known_mask=known_mask, known_values=known_values).bits
    except DetectionError:
        return None


def run_ber_sweep(ec: ExperimentConfig, out_dir=None) -> dict:
    """BER under matched (unequal-CP) vs mismatched (equal-CP-assumed)
    detection, per CP ratio and SNR, with shared channels and noise."""
    ec.kind = "ber-sweep"
    const = Constellation.qam(4)
    rows = []
    for ratio in ec.cp_ratios:
        cfg = _frame_with_ratio(ec.frame, ratio)
        n_bits_frame = cfg.N * cfg.M * const.bits_per_symbol
        for snr in ec.snr_db:
            sigma2 = 10.0 ** (-snr / 10.0)
            errors = {mode: 0 for mode in ec.detector_modes}
            total = 0
            for trial in range(ec.trials):
                ch = draw_channel(ec.channel, cfg,
                                  stream_rng(ec.seed, trial, "channel"))
                bits = stream_rng(ec.seed, trial, "bits").integers(
                    0, 2, n_bits_frame)
                x = map_bits(bits, const, cfg)
                y = run_chain(x, ch, cfg, cfg.M * sigma2,
                              stream_rng(ec.seed, trial, "noise"))
                total += n_bits_frame
                for mode in ec.detector_modes:
                    eff = build_effective_channel(
                        ch, cfg, assume_equal_cp=(mode == "equal-cp-assumed"))
                    det = _detect_bits(y, eff, sigma2, const, ec.detector)
                    errors[mode] += (n_bits_frame // 2 if det is None
                                     else int(np.count_nonzero(det != bits)))
            for mode in ec.detector_modes:
                if not 0 <= errors[mode] <= total:
                    raise RuntimeError("bit accounting out of range")
                rows.append({"cp_ratio": ratio, "snr_db": snr,
                             "detector_mode": mode, "bits": total,
                             "bit_errors": errors[mode],
                             "ber": errors[mode] / total})
    summary = {"bits_per_point": ec.trials * ec.frame.N * ec.frame.M
               * const.bits_per_symbol}
    if out_dir is not None:
        _emit(out_dir, ec, {"ber_sweep.csv": (list(rows[0]), rows)}, summary)
    return {"rows": rows, "summary": summary}


def run_ce_compare(ec: ExperimentConfig, out_dir=None) -> dict:
    """BER of perfect-CSI, ML-CE and threshold-CE detection with shared
    channel/noise realizations per trial."""
    ec.kind = "ce-compare"
    cfg = ec.frame
    const = Constellation.qam(4)
    k_max, l_max = channel_bounds(ec.channel, cfg)
    snr_p = 10.0 ** (ec.snr_p_db / 10.0)
    methods = ("perfect", "ml", "threshold")
    rows = []
    for snr in ec.snr_db:
        sigma2 = 10.0 ** (-snr / 10.0)
        x_p = np.sqrt(snr_p * (sigma2 if sigma2 > 0 else 1.0))
        layout = PilotLayout.for_config(cfg, k_max, l_max, x_p)
        known_mask = layout.guard_mask(cfg)
        known_values = layout.pilot_grid(cfg)
        tau = 3.0 / np.sqrt(snr_p)
        mask_bits = int((~known_mask).sum()) * const.bits_per_symbol
        errors = {m: 0 for m in methods}
        total = 0
        for trial in range(ec.trials):
            ch = draw_channel(ec.channel, cfg,
                              stream_rng(ec.seed, trial, "channel"))
            bits = stream_rng(ec.seed, trial, "bits").integers(0, 2, mask_bits)
            x = embed_pilot(map_bits(bits, const, cfg, layout), layout, cfg)
            y = run_chain(x, ch, cfg, cfg.M * sigma2,
                          stream_rng(ec.seed, trial, "noise"))
            obs = extract_observation(y, layout, cfg)
            total += mask_bits
            operators = {
                "perfect": build_effective_channel(ch, cfg),
                "ml": build_effective_channel(
                    ml_estimate(obs, layout, cfg, tau), cfg),
                "threshold": threshold_estimate(obs, layout, cfg, tau * x_p),
            }
            for m in methods:
                det = _detect_bits(y, operators[m], sigma2, const, ec.detector,
                                   known_mask=known_mask,
                                   known_values=known_values)
                errors[m] += (mask_bits // 2 if det is None
                              else int(np.count_nonzero(det != bits)))
        for m in methods:
            rows.append({"snr_db": snr, "snr_p_db": ec.snr_p_db, "method": m,
                         "bits": total, "bit_errors": errors[m],
                         "ber": errors[m] / total})
    summary = {"k_max": k_max, "l_max": l_max}
    if out_dir is not None:
        _emit(out_dir, ec, {"ce_compare.csv": (list(rows[0]), rows)}, summary)
    return {"rows": rows, "summary": summary}


def run_channel_response(ec: ExperimentConfig, out_dir=None,
                         support_threshold: float = 0.01) -> dict:
    """Normalized impulse-response magnitude grids of the per-symbol-CP
    operator vs the single-CP reference, plus support counts."""
    ec.kind = "channel-response"
    cfg = ec.frame
    ch = draw_channel(ec.channel, cfg, stream_rng(ec.seed, 0, "channel"))
    eff_cp = build_effective_channel(ch, cfg)
    eff_rcp = rcp_reference(ch, cfg)
    resp_cp = eff_cp.impulse_response()
    resp_rcp = eff_rcp.impulse_response()
    summary = {
        "paths": len(ch),
        "support_threshold": support_threshold,
        "cp_support": int(np.count_nonzero(resp_cp >= support_threshold)),
        "rcp_support": int(np.count_nonzero(resp_rcp >= support_threshold)),
        "cp_taps": eff_cp.tap_count(),
        "rcp_taps": eff_rcp.tap_count(),
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_grid_csv(out / "response_cp_otfs.csv", resp_cp)
        write_grid_csv(out / "response_rcp_reference.csv", resp_rcp)
        ch.to_json(out / "channel.json")
        _emit(out_dir, ec, {}, summary)
    return {"response_cp": resp_cp, "response_rcp": resp_rcp,
            "summary": summary, "channel": ch}


# ---------------------------------------------------------------------------
# default configurations (desk scale with the full-scale variant on a flag)


_FIG2_PATHS = {"type": "explicit", "paths": [
    {"gain": [0.62, 0.31], "delay_idx": 0, "doppler_idx": 2},
    {"gain": [-0.45, 0.38], "delay_idx": 1, "doppler_idx": -7},
    {"gain": [0.28, -0.42], "delay_idx": 2, "doppler_idx": 5},
    {"gain": [-0.21, 0.18], "delay_idx": 3, "doppler_idx": -3},
    {"gain": [0.14, 0.11], "delay_idx": 4, "doppler_idx": 9},
]}


def default_config(kind: str, full_scale: bool = False,
                   seed: int = 20260809) -> ExperimentConfig:
    """Built-in experiment configurations.

    Desk scale keeps the full-scale CP-to-symbol proportions (5-sample
    regular CP) on a 32x32 grid so runs finish in CI time; ``full_scale``
    switches to the 128x128 / S=8 / 20-tap-window setup.  The full-scale
    ce-compare uses 250 km/h because at 500 km/h the no-wrap pilot guard
    (4*(k_max + N_hat) + 1 rows) no longer fits a 128-row grid.
    """
    eva500 = {"type": "eva", "carrier_hz": 5e9, "speed_kmh": 500.0}
    if kind == "ior-validate":
        if full_scale:
            frame = FrameConfig.with_cp_samples(128, 128, 15e3, 8, 5, 6, 20)
            channel = {"type": "random", "n_bins": 3, "k_max": 20, "l_max": 5}
        else:
            frame = FrameConfig.with_cp_samples(16, 16, 15e3, 4, 2, 3, 8)
            channel = {"type": "random", "n_bins": 3, "k_max": 7, "l_max": 2}
        return ExperimentConfig(frame=frame, channel=channel, trials=10,
                                seed=seed, kind=kind)
    if kind == "ber-sweep":
        if full_scale:
            frame = FrameConfig.with_cp_samples(128, 128, 15e3, 8, 5, 6, 20)
            trials = 4
        else:
            frame = FrameConfig.with_cp_samples(32, 32, 15e3, 8, 5, 6, 8)
            trials = 49
        return ExperimentConfig(frame=frame, channel=eva500,
                                snr_db=(8.0, 11.0, 14.0), trials=trials,
                                seed=seed, cp_ratios=(1.2, 1.8), kind=kind)
    if kind == "ce-compare":
        if full_scale:
            frame = FrameConfig.with_cp_samples(128, 128, 15e3, 8, 5, 6, 20)
            channel = {"type": "eva", "carrier_hz": 5e9, "speed_kmh": 250.0}
            trials = 4
        else:
            frame = FrameConfig.with_cp_samples(32, 32, 15e3, 8, 5, 6, 4)
            channel = {"type": "random", "n_bins": 3, "k_max": 3, "l_max": 2}
            trials = 57
        return ExperimentConfig(frame=frame, channel=channel,
                                snr_db=(6.0, 8.0, 10.0, 12.0, 14.0),
                                snr_p_db=30.0, trials=trials, seed=seed,
                                kind=kind)
    if kind == "channel-response":
        m = 128 if full_scale else 32
        n_hat = 20 if full_scale else 8
        frame = FrameConfig.with_cp_samples(m, m, 15e3, 8, 5, 6, n_hat)
        return ExperimentConfig(frame=frame, channel=_FIG2_PATHS, trials=1,
                                seed=seed, kind=kind)
    raise ConfigurationError(f"unknown experiment kind {kind!r}")
