"""Cross-view identity matching by closed-form discriminative regression.

The library fits a ridge-regularized projection against a unit-norm class
indicator, updates it incrementally as annotations arrive, and drives a
human-in-the-loop annotation loop that picks which probe to label next by
a joint exploration-exploitation score. Evaluation uses identity-disjoint
splits and cumulative match curves; feature sets and fitted models travel
in small self-describing binary files.
"""

from .core import (
    GALLERY,
    PROBE,
    FeatureMatrix,
    HerModel,
    IndicatorMatrix,
    KernelModel,
    KernelSpec,
    ScatterStats,
    build_indicator,
    fisher_trace,
    fit_her_dual,
    fit_her_primal,
    linear_kernel,
    median_squared_distance,
    merge_views,
    min_max_normalize,
    model_distance,
    normal_equation_residual,
    pairwise_distances,
    project,
    rbf_kernel,
    scatter_stats,
    split_views,
)
from .active import (
    POLICIES,
    ActiveConfig,
    ActivePool,
    ActiveRunResult,
    AnnotationEvent,
    SelectionScores,
    active_step,
    apply_annotation,
    build_active_pool,
    density_scores,
    derive_trial_streams,
    diversity_score,
    empty_incremental_model,
    entropy_of,
    joint_scores,
    matching_uncertainty_score,
    milestone_steps,
    normalize_scores,
    oracle_annotator,
    rank_gallery,
    ranking_distribution,
    ranking_entropy_score,
    ranking_model,
    select_next_probe,
    simulate_active_run,
)
from .data import (
    SyntheticSpec,
    TwoViewData,
    generate_synthetic,
    import_text,
    load_features,
    load_model,
    reindex_labels,
    save_features,
    save_model,
)
from .errors import (
    FormatError,
    HerError,
    InvalidInputError,
    InvalidParameterError,
    InvalidStateError,
    ModelNotIncrementalError,
    NotFoundError,
    PoolExhaustedError,
)
from .evaluation import CmcCurve, SplitSpec, SplitResult, compute_cmc, fuse_scores, make_split
from .incremental import (
    UpdateBatch,
    UpdateReport,
    apply_update_policy,
    default_scalar_threshold,
    pad_indicator,
    refresh,
    update_chunk,
    update_single,
)

__version__ = "0.1.0"
