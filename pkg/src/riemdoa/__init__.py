"""DoA estimation from Riemannian means of segment correlation matrices."""

from . import array_model, beamformers, errors, hpd, metrics, scenario, stft
from .array_model import ArrayGeometry, steering_matrix, steering_vector
from .beamformers import BeamPattern, DoaEstimate, EstimatorConfig, doa_batch, doa_streaming
from .hpd import (MeanConfig, commuting_mean, distance_logeuclid, distance_riemann, euclidean_mean,
                  exp_map, karcher_mean, log_euclidean_mean, log_map)
from .scenario import RoomSpec, Scenario, SourceSpec, render_signals
from .stft import StftConfig, segment_correlations, stft_bin

__version__ = "0.1.0"
