"""Simulation of analog in-memory training with symmetric-point calibration and tracking."""
from .devices import (AnalogTile, ConstantSymmetric, DeviceSpec, DeviceVariationSpec,
                      LinearDevice, UpdateOutcome, apply_update, make_tile,
                      make_tile_with_sp, q_bounds, response_FG, symmetric_point)
from .dsp import (ChopperState, chopper_sequence, empirical_frequency_response,
                  ma_frequency_response)
from .errors import AnalysisError, ConfigError, NoSymmetricPointError, PrecisionError
from .objectives import LogisticObjective, QuadraticObjective
from .spcal import (OffsetModel, SPEstimate, make_reference, sp_error_stats, zs_cyclic,
                    zs_stochastic)
from .trainers import (RunRecord, TrainerConfig, TrainerState, analog_sgd_step,
                       erider_step, rider_step, run, run_one, two_stage_train)

__version__ = "0.1.0"
