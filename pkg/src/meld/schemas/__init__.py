from .config import (
    DataConfig,
    DenoiserConfig,
    EvalConfig,
    RunConfig,
    SampleConfig,
    ScheduleConfig,
    TrainConfig,
    apply_overrides,
    load_config,
)
from .reports import MetricsReport

__all__ = [
    'DataConfig',
    'DenoiserConfig',
    'EvalConfig',
    'RunConfig',
    'SampleConfig',
    'ScheduleConfig',
    'TrainConfig',
    'apply_overrides',
    'load_config',
    'MetricsReport',
]
