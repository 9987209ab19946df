"""Local explanations for black-box tabular classifiers.

Three explainers over one pipeline: a LIME baseline, the autoencoder-weighted
linear variant (alime), and its decision-tree counterpart (tree-alime), plus
local-fidelity and stability evaluation of the results.
"""

from .dataset import (
    Dataset,
    EncodedColumn,
    EncodedDataset,
    Feature,
    FeatureSchema,
    Scaler,
    apply_scaler,
    fit_scaler,
    load_csv,
    one_hot_encode,
    split,
    split_indices,
)
from .evaluation import (
    FidelityEntry,
    FidelityReport,
    StabilityReport,
    StabilitySweep,
    fidelity_sweep,
    jaccard,
    linear_stability,
    local_fidelity,
    stability_experiment,
    stability_sweep,
    tree_stability,
)
from .explain import (
    Explanation,
    ExplainerConfig,
    explain,
    explain_alime,
    explain_lime,
    explain_tree_alime,
    render_explanation,
    tree_to_dot,
)
from .neuralnet import (
    DenoisingAutoencoder,
    GridSearchResult,
    MlpClassifier,
    TrainConfig,
    accuracy,
    ae_encode,
    ae_train,
    grid_search_cv,
    load_model,
    mlp_forward,
    mlp_train,
    save_model,
)
from .sampler import (
    NeighborhoodSample,
    PerturbationConfig,
    TrainingStats,
    gaussian_sample,
    kernel_weights,
    lime_neighborhood,
    select_nearest,
)
from .surrogate import (
    LinearSurrogate,
    TreeSurrogate,
    feature_importances,
    fit_cart,
    fit_logistic,
    predict_proba,
    top_bottom_quartile,
)

__version__ = "0.1.0"
