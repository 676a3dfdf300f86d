"""Feature attributions propagated through pipelines of heterogeneous models.

Builds local, efficiency-preserving attributions for compositions of linear
stages, elementwise nonlinearities, decision-tree ensembles, and output
transforms, averaged over a baseline distribution and verifiable against an
exact brute-force Shapley oracle.  Includes group attribution, k-means
baseline selection, ablation-test evaluation, and a distributed protocol in
which each sub-model stays private to its owning institution.
"""

from .ablation import AblationCurve, ablation_curve
from .baselines import (
    BaselineSet,
    ClusterModel,
    assign_baseline_cluster,
    cluster_baseline_set,
    kmeans_fit,
    uniform_sample,
)
from .chain import (
    AttributionReport,
    ChainTrace,
    chain_attribution_matrix,
    chain_single_baseline,
    chain_with_distribution,
    ensemble_attr,
    hadamard_div,
    set_efficiency_check_mode,
)
from .errors import (
    ArityError,
    BaselineMismatchError,
    ChainAttrError,
    EfficiencyError,
    PipelineSpecError,
    ProtocolError,
    WidthError,
)
from .groups import GroupAttribution, GroupSpec, group_attr
from .io import load_dataset, load_group_spec, load_pipeline
from .oracle import (
    Partition,
    SetFunction,
    exact_shapley,
    interventional_shapley,
    kpartition_attribution,
    permutation_shapley,
    sign_split_partition,
    single_baseline_shapley,
    singleton_partition,
)
from .pipeline import (
    ActivationStage,
    ForwardTrace,
    LinearStage,
    ParallelBlockStage,
    Pipeline,
    TransformStage,
    Tree,
    TreeEnsembleStage,
    evaluate,
    splice,
    with_output_selector,
)
from .stage_attr import (
    StageAttribution,
    activation_stage_attr,
    linear_stage_attr,
    parallel_block_attr,
    stage_attribution,
    transform_stage_attr,
    tree_stage_attr,
)

__version__ = "0.1.0"

__all__ = [
    "AblationCurve",
    "ablation_curve",
    "BaselineSet",
    "ClusterModel",
    "assign_baseline_cluster",
    "cluster_baseline_set",
    "kmeans_fit",
    "uniform_sample",
    "AttributionReport",
    "ChainTrace",
    "chain_attribution_matrix",
    "chain_single_baseline",
    "chain_with_distribution",
    "ensemble_attr",
    "hadamard_div",
    "set_efficiency_check_mode",
    "ArityError",
    "BaselineMismatchError",
    "ChainAttrError",
    "EfficiencyError",
    "PipelineSpecError",
    "ProtocolError",
    "WidthError",
    "GroupAttribution",
    "GroupSpec",
    "group_attr",
    "load_dataset",
    "load_group_spec",
    "load_pipeline",
    "Partition",
    "SetFunction",
    "exact_shapley",
    "interventional_shapley",
    "kpartition_attribution",
    "permutation_shapley",
    "sign_split_partition",
    "single_baseline_shapley",
    "singleton_partition",
    "ActivationStage",
    "ForwardTrace",
    "LinearStage",
    "ParallelBlockStage",
    "Pipeline",
    "TransformStage",
    "Tree",
    "TreeEnsembleStage",
    "evaluate",
    "splice",
    "with_output_selector",
    "StageAttribution",
    "activation_stage_attr",
    "linear_stage_attr",
    "parallel_block_attr",
    "stage_attribution",
    "transform_stage_attr",
    "tree_stage_attr",
]
