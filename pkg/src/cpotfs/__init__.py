"""CP-OTFS delay-Doppler link-level simulation library.

Core pieces: frame numerology and the unitary DD<->TF transforms (`frame`),
the discrete-time multi-CP transmitter/receiver (`waveform`), on-grid
doubly-selective channels (`channel`), the Doppler-spreading effective
channel and its sparse operators (`effective`), embedded-pilot channel
estimation (`estimation`), message-passing detection (`detection`) and the
seeded experiment harness (`harness`).
"""

from .channel import (ChannelSpec, EVA_PROFILE, PathSpec, PowerDelayProfile,
                      gen_eva, quantize)
from .detection import (Constellation, DetectionResult, MPParams, data_mask,
                        demap_bits, map_bits, mp_detect)
from .effective import (EffectiveChannel, SparsityMetrics,
                        build_effective_channel, doppler_spread,
                        doppler_spread_direct, doppler_spread_equal_cp,
                        predict_dd_output, rcp_reference, sparsity_metrics,
                        spread_window)
from .errors import ConfigurationError, DetectionError, FramingError
from .estimation import (PilotLayout, embed_pilot, extract_observation,
                         ml_estimate, pilot_response, threshold_estimate)
from .frame import FrameConfig, isfft, sfft
from .harness import (ExperimentConfig, default_config, run_ber_sweep,
                      run_ce_compare, run_chain, run_channel_response,
                      run_ior_validate, stream_rng)
from .waveform import (cp_duration, demodulate, modulate, read_iq,
                       stream_length, time_origin_samples, write_iq)

__version__ = "0.1.0"

__all__ = [
    "ChannelSpec", "EVA_PROFILE", "PathSpec", "PowerDelayProfile", "gen_eva",
    "quantize", "Constellation", "DetectionResult", "MPParams", "data_mask",
    "demap_bits", "map_bits", "mp_detect", "EffectiveChannel",
    "SparsityMetrics", "build_effective_channel", "doppler_spread",
    "doppler_spread_direct", "doppler_spread_equal_cp", "predict_dd_output",
    "rcp_reference", "sparsity_metrics", "spread_window",
    "ConfigurationError", "DetectionError", "FramingError", "PilotLayout",
    "embed_pilot", "extract_observation", "ml_estimate", "pilot_response",
    "threshold_estimate", "FrameConfig", "isfft", "sfft", "ExperimentConfig",
    "default_config", "run_ber_sweep", "run_ce_compare", "run_chain",
    "run_channel_response", "run_ior_validate", "stream_rng", "cp_duration",
    "demodulate", "modulate", "read_iq", "stream_length",
    "time_origin_samples", "write_iq",
]
