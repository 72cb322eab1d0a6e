"""Frequency-resolved photon correlations of a coherently driven
two-level emitter, computed with weakly coupled spectral sensor modes.

The library builds the composite emitter-plus-sensors master equation,
extracts its steady state, and forms correlation ratios whose sensor
coupling cancels -- verified at runtime by a coupling-halving protocol.
"""

__version__ = "1.0.0"

from .atlas import (FilterRecommendation, LeapfrogCondition, annotate,
                    enumerate_conditions, recommend_filters)
from .correlators import (CorrelationRequest, GResult, PlaneSpec, ResultGrid,
                          autocorrelation_scan, cut3d, g_tau, g_zero_delay,
                          map2d, sensor_moments, spectrum_scan,
                          wk_spectrum_oracle)
from .errors import (CapacityError, ConfigError, ConvergenceError,
                     DegeneracyError, FeasibilityError, IntegrityError,
                     MollowError, ModelError, OracleError, ParameterError,
                     PrecisionError, PropagationError, RegimeError,
                     SolverError)
from .model import (CompositeModel, DressedInfo, SensorSpec, SystemParams,
                    build_model, default_epsilon, dressed_splitting,
                    drive_for_target_splitting, splitting_corrected,
                    splitting_printed)
from .operators import (Liouvillian, SpaceLayout, annihilation_op,
                        build_liouvillian, lift, unvec, vec)
from .resultio import read_result, write_result
from .steady import (DensityMatrix, assert_unique_steady_state,
                     solve_steady_state, solve_steady_state_sectored,
                     validate_density_matrix)
from .sweep import SweepAxis, SweepPlan, resume, run_sweep

__all__ = [name for name in dir() if not name.startswith("_")]
