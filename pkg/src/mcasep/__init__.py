"""Sparse two-component separation of transient signals.

A signal is split as ``y = A1 x1 + A2 x2`` with sparse coefficients in two
tight frames: identity/DFT for the classic spike-plus-tone problem, or
enveloped sinusoid frames (rectangular windows versus decaying
exponentials) for short-duration versus long-duration ringing.
"""

from .esp import (EnvelopeSet, EspFrame, InvalidEnvelopeError, build_esp_frame, constant_envelope,
                  dense_synthesis_matrix, esp_analyze, esp_synthesize, make_exponential_envelopes,
                  make_rectangular_envelopes, normalize_parseval, one_hot_envelope)
from .frames import (DFTFrame, FrameOperator, IdentityFrame, InvalidDimensionError, InvalidParameterError, Signal,
                     dft_frame, identity_frame, soft_threshold)
from .signals import (IntervalMetrics, OscillatorSpec, SyntheticTargetSpec, UndefinedMetricError,
                      UnsupportedRegimeError, add_awgn, driven_oscillator, interval_errors, relative_error,
                      spike_plus_sine, synthetic_elastic_target)
from .solver import (NumericalDivergenceError, SeparationResult, SolverConfig, lambda_max,
                     optimality_certificate, solve_mca, solve_mca_batch)

__version__ = "0.1.0"
