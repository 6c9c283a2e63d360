"""Channel estimation and feedback for wideband hybrid MIMO with a trainable
phase-shifter encoder and an unrolled MMV-LAMP decoder."""

from .autodiff import Tape, backprop
from .channel import (
    FseScene, PathSet, SystemConfig, channel_dataset, frequency_channel, fse_channel,
    fse_dataset, sample_paths, steering_vector,
)
from .dictionary import Dictionary, build_dft, build_redundant_dictionary, partial_dft, select_subcarriers
from .experiments import ExperimentConfig, evaluate_cell, nmse_db, parse_config, run_eval, write_csv
from .feedback import FeedbackBundle, compress_feedback, fcrn_pipeline, frsn_run
from .frontend import adc_quantize, measure, phases_to_combiner, quantize_phases
from .serialization import Checkpoint, load_checkpoint, load_dataset, save_checkpoint, save_dataset
from .solvers import (
    LampParams, mmv_amp_run, mmv_lamp_estimate, mmv_lamp_run, shrinkage,
    shrinkage_divergence, somp_run,
)
from .training import AdamState, TrainConfig, adam_init, adam_step, nmse_loss, train_frsn, train_layerwise

__version__ = "0.1.0"
