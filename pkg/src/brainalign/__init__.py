"""brainalign: one small CNN, five learning conditions, and the full RSA
statistical pipeline for scoring layer-wise alignment against brain RDMs.
"""

from .errors import (
    BrainalignError,
    ConfigurationError,
    DataFormatError,
    TrainingDivergedError,
    UndefinedStatisticError,
)
from .network import (
    NetworkState,
    TAPS,
    extract_all_taps,
    extract_features,
    forward,
    init_he_normal,
    load_checkpoint,
    save_checkpoint,
)
from .pipeline import (
    ExperimentConfig,
    best_layer_sweep,
    partial_rsa_report,
    per_subject_analysis,
    run_experiment,
)
from .rdm import RDM, average_rdms, pixel_rdm, rdm_from_features, upper_triangle
from .rules import LearningRuleConfig, RULES, stdp_kernel, train
from .stats import (
    NoiseCeiling,
    PairwiseTest,
    RsaResult,
    bootstrap_ci,
    cohens_d_paired,
    compute_rsa,
    fdr_bh,
    noise_ceiling,
    partial_spearman,
    permutation_test,
    spearman,
)

__version__ = "0.1.0"

__all__ = [
    "BrainalignError", "ConfigurationError", "DataFormatError",
    "TrainingDivergedError", "UndefinedStatisticError",
    "NetworkState", "TAPS", "extract_all_taps", "extract_features", "forward",
    "init_he_normal", "load_checkpoint", "save_checkpoint",
    "ExperimentConfig", "best_layer_sweep", "partial_rsa_report",
    "per_subject_analysis", "run_experiment",
    "RDM", "average_rdms", "pixel_rdm", "rdm_from_features", "upper_triangle",
    "LearningRuleConfig", "RULES", "stdp_kernel", "train",
    "NoiseCeiling", "PairwiseTest", "RsaResult", "bootstrap_ci",
    "cohens_d_paired", "compute_rsa", "fdr_bh", "noise_ceiling",
    "partial_spearman", "permutation_test", "spearman",
    "__version__",
]
