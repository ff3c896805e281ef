from feedmask.evalharness.metrics import ConfusionMatrix, confusion_metrics
from feedmask.evalharness.mind import (
    BUCKET_EDGES,
    Cohort,
    MindDataset,
    bucket_index,
    bucket_label,
    bucket_users,
    fixture_dir,
    load_mind,
)
from feedmask.evalharness.proxy import (
    METHODS,
    ProxyStep,
    ProxyTrace,
    TrialSlate,
    UniformChoiceBackend,
    make_runner,
    make_trial,
    run_benchmark,
    run_proxy,
)
from feedmask.evalharness.synthetic import OracleBackend, PlantedWorld

__all__ = [
    "BUCKET_EDGES",
    "METHODS",
    "Cohort",
    "ConfusionMatrix",
    "MindDataset",
    "OracleBackend",
    "PlantedWorld",
    "ProxyStep",
    "ProxyTrace",
    "TrialSlate",
    "UniformChoiceBackend",
    "bucket_index",
    "bucket_label",
    "bucket_users",
    "confusion_metrics",
    "fixture_dir",
    "load_mind",
    "make_runner",
    "make_trial",
    "run_benchmark",
    "run_proxy",
]
