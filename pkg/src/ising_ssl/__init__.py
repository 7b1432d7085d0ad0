"""Semi-supervised classification by layered Ising ground states."""
from .annealer import (
    AnnealSchedule,
    LayerProblem,
    ReadSet,
    SpinConfiguration,
    bias_mode,
    energy,
    exact_ground_state,
    majority_readout,
    path_integral_anneal,
    simulated_anneal,
    solve,
)
from .dataset import (
    Dataset,
    ParseError,
    SplitSpec,
    generate_blobs,
    load_csv,
    load_digits_2d,
    load_iris,
    pca_project,
    split,
)
from .encoding import (
    LabelCodebook,
    build_codebook,
    compute_barycenters,
    decode,
    decode_spins,
    gray_code,
    shortest_label_path,
)
from .learning import (
    FitReport,
    LearningProblem,
    fit,
    layer_partition,
    log_layer_partition,
    nll,
    nll_gradient,
    nll_gradient_check,
)
from .pipeline import (
    Classification,
    EvaluationReport,
    TrainConfig,
    TrainedModel,
    classify,
    evaluate,
    run_once,
    sweep,
    sweep_csv,
    train,
)
from .similarity import (
    DiagonalGaussian,
    GaussianMixture,
    PruneWarning,
    ReciprocalDistance,
    coupling,
    knn_mask,
    prune_connectivity,
    similarity_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "AnnealSchedule",
    "LayerProblem",
    "ReadSet",
    "SpinConfiguration",
    "bias_mode",
    "energy",
    "exact_ground_state",
    "majority_readout",
    "path_integral_anneal",
    "simulated_anneal",
    "solve",
    "Dataset",
    "ParseError",
    "SplitSpec",
    "generate_blobs",
    "load_csv",
    "load_digits_2d",
    "load_iris",
    "pca_project",
    "split",
    "LabelCodebook",
    "build_codebook",
    "compute_barycenters",
    "decode",
    "decode_spins",
    "gray_code",
    "shortest_label_path",
    "FitReport",
    "LearningProblem",
    "fit",
    "layer_partition",
    "log_layer_partition",
    "nll",
    "nll_gradient",
    "nll_gradient_check",
    "Classification",
    "EvaluationReport",
    "TrainConfig",
    "TrainedModel",
    "classify",
    "evaluate",
    "run_once",
    "sweep",
    "sweep_csv",
    "train",
    "DiagonalGaussian",
    "GaussianMixture",
    "PruneWarning",
    "ReciprocalDistance",
    "coupling",
    "knn_mask",
    "prune_connectivity",
    "similarity_matrix",
]
