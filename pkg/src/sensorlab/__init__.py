"""sensorlab: virtual-sensor modelling with configured feedforward networks.

Trains single-hidden-layer tanh regression networks with Levenberg-Marquardt
or Bayesian-regularization backpropagation, selects the hidden-neuron count by
sweeping six hard-coded weight/bias configurations against threshold rules,
and refines the four configuration coefficients with a three-pass adaptive
grid search that never accepts a degradation.
"""

from .awb import (AwbContext, AwbTrace, BR_STEPS, LM_STEPS, Quantity, StepSchedule,
                  pick_index, schedule_for, tune_all, tune_quantity)
from .dataset import (DataError, Dataset, Scaler, SplitIndices, fit_apply_scaler,
                      interleaved_split, load_csv, rank_inputs, save_csv)
from .evaluation import EvalProblem, evaluate_config
from .metrics import Metrics, compute_metrics, point_accuracy
from .netcore import (CONFIGURED_SETS, MlpParams, WeightConfig, config_for_set,
                      flatten, forward, init_params, jacobian, load_model, predict,
                      save_model, unflatten)
from .neuron_search import (SetResult, SweepRow, choose_neurons_for_set, count_cut,
                            perf_cut, run_search, select_final, sweep_set)
from .pipeline import ConfigError, RunConfig, run_pipeline
from .synthetic import EngineGenSpec, generate_engine_dataset
from .trainers import (StopReason, TrainedModel, TrainerKind, TrainingAbort,
                       TrainOptions, train, train_br, train_lm)

__version__ = "0.1.0"
