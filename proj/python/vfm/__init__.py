"""Virtual flow metering laboratory: choke physics, synthetic datasets,
physics / neural / hybrid models, MAP training and the experiment runners."""

from ._vfm import (
    Dataset,
    Model,
    VfmError,
    __version__,
    area_equal_percentage,
    build_model,
    critical_pressure_ratio,
    evaluate_process,
    flow_unit_scale,
    generate_d2,
    generate_d3,
    load_dataset,
    mae,
    quantiles,
    restore_model,
    run_experiment,
    sample_d1,
    train,
)

MODELS = ("M*", "M", "H-A", "H-E", "D")

__all__ = [
    "Dataset",
    "MODELS",
    "Model",
    "VfmError",
    "__version__",
    "area_equal_percentage",
    "build_model",
    "critical_pressure_ratio",
    "evaluate_process",
    "flow_unit_scale",
    "generate_d2",
    "generate_d3",
    "load_dataset",
    "mae",
    "quantiles",
    "restore_model",
    "run_experiment",
    "sample_d1",
    "train",
]
