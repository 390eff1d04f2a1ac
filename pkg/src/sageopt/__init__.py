"""SAGE: a sign-momentum optimizer with an O(d) adaptive damper, hybrid
per-role training, and a Zipfian toy language model to exercise it."""

from .damper import DamperState, ParamRole, compute_s, compute_scale, update_state
from .errors import (
    ConfigurationError,
    DimensionError,
    InvalidValueError,
    LogFormatError,
    SageError,
    UnsupportedPolicyError,
    UsageError,
)
from .optimizers import (
    AdamWConfig,
    AdamWState,
    Algorithm,
    HybridOptimizer,
    LionConfig,
    LionState,
    LrSchedule,
    Policy,
    SageConfig,
    SageState,
    SinkGDConfig,
    StepReport,
    adamw_step,
    hybrid_assign,
    lion_step,
    lr_at,
    sage_step,
    sinkgd_step,
    weight_decay,
)
from .runlog import RunLog
from .training import TrainConfig, train_run

__version__ = "0.1.0"
