"""Relay-test identification and PD tuning for noisy servoing loops."""

from .cascade import CascadedPlant
from .classifier import MlpModel, TrainConfig, classify, modified_softmax, preprocess, train
from .cycles import CycleNotConverged, LimitCycle, NoiseEstimate, detect_limit_cycle, estimate_noise
from .grid import GridClass, ProcessGrid, build_grid
from .identify import (IdentificationResult, UavPlant, generate_dataset,
                       identify, identify_cascaded, recover_gain_and_scale)
from .models import (PdGains, RunTraces, SimulationConfig, TimeSeries,
                     TransferFunctionModel, closed_loop_step, frequency_response,
                     ise_cost, simulate_lti)
from .relay import (MrftConfig, NpMrftConfig, RelayState, beta_min,
                    harmonic_balance_predict, mrft_step, np_mrft_step, run_relay_test)
from .tuning import TuningSpec, optimize_pd, phase_margin, sensitivity

__version__ = "0.1.0"
