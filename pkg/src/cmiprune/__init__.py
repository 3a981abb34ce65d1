"""Information-theoretic CNN filter pruning on kernel eigenspectra."""

from .entropy import (
    EntropyOrder,
    FeatureMatrix,
    KernelSpec,
    NormalizedKernel,
    build_kernel,
    conditional_mi,
    eigenspectrum,
    joint_entropy,
    label_kernel,
    mutual_information,
    renyi_entropy,
)
from .ordering import (
    ConditioningContext,
    LayerFeatures,
    OrderedLayer,
    build_layer_kernels,
    order_layer,
)
from .cutoff import (
    CutoffResult,
    PermutationParams,
    ScreeParams,
    XMeansParams,
    permutation_cutoff,
    permutation_scan,
    scree_cutoff,
    xmeans_clusters,
    xmeans_cutoff,
)
from .orchestrator import (
    LayerPlan,
    PruneConfig,
    PruneReport,
    PruningPlan,
    bidirectional_prune,
    forward_prune,
    summarize,
)
from .toynet import (
    LabeledDataset,
    MaskSet,
    ToyModel,
    apply_mask,
    evaluate,
    forward_extract,
    synthetic_dataset,
    train,
)
from .harness import ToyTrialSession, extract_features, retrain_under_plan
from .dumpio import load_model, read_feature_dump, read_npy, save_model, write_feature_dump, write_npy
from .config import RunConfig

__version__ = "0.1.0"
