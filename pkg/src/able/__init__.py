"""Local explanations from adversarial pairs bracketing the decision boundary."""

from .attacks import (
    AttackConfig,
    AttackFailed,
    AttackResult,
    deepfool_attack,
    fgsm_attack,
    hopskipjump_attack,
    pgd_attack,
    run_attack,
)
from .data import (
    Dataset,
    FeatureSchema,
    Standardizer,
    encode_and_standardize,
    load_csv,
    split_dataset,
)
from .explainer import (
    AdversarialPair,
    Explanation,
    ExplanationFailed,
    Neighborhood,
    NeighborhoodConfig,
    SurrogateModel,
    build_pair_dataset,
    explain,
    fit_binary_surrogate,
    fit_multinomial_surrogate,
    generate_pair,
    sample_neighborhood,
)
from .lime import LimeConfig, kernel_weight, lime_explain, lime_sample
from .metrics import (
    DegenerateNeighborhoodError,
    FidelityReport,
    StabilityReport,
    fidelity_r2,
    jaccard_top_k,
    stability_eval,
    timed,
)
from .mlp import MlpClassifier, ModelBundle, TrainConfig, train_mlp

__version__ = "0.1.0"

__all__ = [
    "AdversarialPair",
    "AttackConfig",
    "AttackFailed",
    "AttackResult",
    "Dataset",
    "DegenerateNeighborhoodError",
    "Explanation",
    "ExplanationFailed",
    "FeatureSchema",
    "FidelityReport",
    "LimeConfig",
    "MlpClassifier",
    "ModelBundle",
    "Neighborhood",
    "NeighborhoodConfig",
    "StabilityReport",
    "Standardizer",
    "SurrogateModel",
    "TrainConfig",
    "build_pair_dataset",
    "deepfool_attack",
    "encode_and_standardize",
    "explain",
    "fgsm_attack",
    "fidelity_r2",
    "fit_binary_surrogate",
    "fit_multinomial_surrogate",
    "generate_pair",
    "hopskipjump_attack",
    "jaccard_top_k",
    "kernel_weight",
    "lime_explain",
    "lime_sample",
    "load_csv",
    "pgd_attack",
    "run_attack",
    "sample_neighborhood",
    "split_dataset",
    "stability_eval",
    "timed",
    "train_mlp",
]
