"""Multi-granularity guided diffusion forecasting for multivariate time series."""

from .checkpoint import load_checkpoint, save_checkpoint
from .diffusion import (
    MASKED,
    final_loss,
    forward_noise,
    guidance_loss_term,
    reverse_step,
    sample_chain,
)
from .forecasting import ForecastSamples, forecast, rolling_evaluate
from .granularity import GranularitySpec, MultiGranSeries, build_multigran, smooth
from .metrics import (
    MetricsReport,
    ShareRatioCurve,
    crps_empirical,
    crps_sum,
    fft_spectrum,
    nmae_sum,
    nrmse_sum,
    select_share_ratio,
)
from .model import Model, TrainConfig
from .optim import AdamState, adam_step, init_adam
from .rng import rng_normal, rng_stream
from .schedule import (
    GranularitySchedule,
    ScheduleSpec,
    derive_gran_schedule,
    linear_beta_schedule,
    share_ratio_to_index,
)
from .tensor import Tensor, grad, tensor
from .training import NumericalError, TrainResult, train

__version__ = "0.1.0"
