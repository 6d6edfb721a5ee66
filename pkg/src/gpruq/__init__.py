"""Exact GPR surrogates for molecular energies with uncertainty calibration and active learning."""

__version__ = "0.1.0"

from .active import (ALConfig, ALTrace, GuardedPool, LabelAccessError, ModelSpec,
                     argmax_selection, evaluate_metrics, run_strategies,
                     run_uncertainty_sampling)
from .calibration import (BIN_WIDTH_PRESETS, CalibrationCurve, EvaluationRecord, ReliabilityBin,
                          SelfCalibrationReport, calibration_curve, check_self_calibration,
                          extended_reliability, make_records, per_bin_error_histogram)
from .dataio import (Dataset, SplitSpec, parse_xyz_trajectory, split, synth_sine,
                     toy_trajectory, write_xyz_trajectory)
from .exceptions import (ConditioningError, ConfigurationError, DegenerateGeometryError,
                         GPRUQError, ParseError)
from .gpr import (FeatureSet, GPRModel, HyperInitGrid, KernelParams, extend, fit,
                  log_marginal_likelihood, optimize_hyperparameters, select_initial_guess)
from .representations import (SoapConfig, Structure, coulomb_feature, coulomb_features,
                              soap_feature_sets, soap_features)
from .selfcheck import run_synthcheck, sine_fixture
from .uncertainty import (BootstrapEstimator, GPREstimator, PredictiveDistribution,
                          TwoSetEstimator, build_estimator)
