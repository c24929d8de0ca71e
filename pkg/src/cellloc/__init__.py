"""Cell-level localization from distributed RSSI sniffer traces.

Two-stage pipeline: short-term moment features feed a KNN point classifier,
then a causal second stage (trailing median or an online HMM) exploits the
fact that people do not teleport between cells. Includes the leave-sets-out
evaluation protocol, node-subset sweeps, and a synthetic trace generator.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .classify import (
    ConfusionMatrix,
    KnnClassifier,
    Standardizer,
    TrainingSet,
    accuracy,
    confusion,
)
from .dataset import (
    MISSING_DBM,
    N_CELLS,
    DataError,
    MeasurementSet,
    NodeMask,
    RssiFrame,
    SplitPlan,
    enumerate_node_masks,
    enumerate_splits,
    import_salrb,
    load_dir,
    load_set,
    select_nodes,
    write_set,
)
from .evaluate import (
    EvalReport,
    FilterSpec,
    PipelineConfig,
    run_pipeline,
    sweep_l,
    sweep_node_masks,
)
from .features import (
    FeatureVector,
    MomentConfig,
    coherence_time,
    feature_matrix,
    moment_features,
    moment_matrix,
    raw_features,
)
from .postprocess import (
    ForwardState,
    Hmm,
    chain_structural_zeros,
    fit_hmm,
    fit_hmm_segments,
    forward_step,
    hmm_filter,
    hmm_filter_with_probabilities,
    median_filter,
    viterbi,
)
from .synth import (
    ChannelParams,
    Geometry,
    Scenario,
    Sniffer,
    Trajectory,
    TrajectoryParams,
    default_geometry,
    generate,
    generate_sets,
)

__all__ = [
    "ChannelParams",
    "ConfusionMatrix",
    "DataError",
    "EvalReport",
    "FeatureVector",
    "FilterSpec",
    "ForwardState",
    "Geometry",
    "Hmm",
    "KERNEL_BACKEND",
    "KnnClassifier",
    "MISSING_DBM",
    "MeasurementSet",
    "MomentConfig",
    "N_CELLS",
    "NodeMask",
    "PipelineConfig",
    "RssiFrame",
    "Scenario",
    "Sniffer",
    "SplitPlan",
    "Standardizer",
    "Trajectory",
    "TrajectoryParams",
    "TrainingSet",
    "accuracy",
    "chain_structural_zeros",
    "coherence_time",
    "confusion",
    "default_geometry",
    "enumerate_node_masks",
    "enumerate_splits",
    "feature_matrix",
    "fit_hmm",
    "fit_hmm_segments",
    "forward_step",
    "generate",
    "generate_sets",
    "hmm_filter",
    "hmm_filter_with_probabilities",
    "import_salrb",
    "load_dir",
    "load_set",
    "median_filter",
    "moment_features",
    "moment_matrix",
    "raw_features",
    "run_pipeline",
    "select_nodes",
    "sweep_l",
    "sweep_node_masks",
    "viterbi",
    "write_set",
]
