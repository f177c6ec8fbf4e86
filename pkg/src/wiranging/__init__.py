"""Waveguide-invariant passive ranging of a moving ship from a single
receiver's spectrogram."""

from .spectral import (BandPartition, NoiseProfile, Spectrogram, TimeSeries, detect_tones,
                       noise_profile, partition_band, stft, to_intensity)
from .simulate import (AnalyticWIChannel, GroundTruth, IdealModesChannel, SimConfig,
                       SourceModel, TrackSpec, green_magnitude, intensity, scenario,
                       synth_spectrogram)
from .striation import (ParamVector, RateProfile, StriationGrid, build_striation_grid,
                        map_time_to_range, project_striation)
from .inference import (LikelihoodResult, estimate_broadband_params, estimate_noncentrality,
                        exp_logpdf, joint_loglik, ml_estimate, nc2_logpdf, range_grid)

__version__ = "0.1.0"
