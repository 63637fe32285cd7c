"""Link prediction for bipartite ecological networks.

The model couples per-host and per-parasite affinities with a phylogenetic
neighborhood effect: a parasite is likelier to use a host whose relatives it
already uses, with relatedness measured on an exponentially rescaled tree.
Inference is Gibbs-within-Metropolis over latent link scores; an optional
component treats recorded absences as possibly undocumented presences.
"""

from .errors import ConfigError, DataError, NumericalError, PhylinkError
from .newick import (
    PairwiseMrcaDepths,
    PhyloTree,
    UnknownTip,
    pairwise_depths,
    parse_newick,
    prune_to,
    random_tree,
    relabel_tips,
    serialize_newick,
)
from .transforms import TransformSpec, transform_legs, transform_matrix, transform_pair, transform_scan
from .interactions import (
    InteractionMatrix,
    InteractionRecord,
    build_matrix,
    degree_distributions,
    drop_single_host_parasites,
    left_order,
    read_edge_csv,
    read_matrix_csv,
    temporal_split,
    write_edge_csv,
    write_matrix_csv,
)
from .model import (
    AffinityPriors,
    ModelState,
    delta_matrix,
    delta_weight,
    gumbel_zero_inflated_logpdf,
    interaction_prob,
    sample_truncated_gumbel,
)
from .sampler import (
    PosteriorTrace,
    SamplerConfig,
    effective_sample_size,
    generate_synthetic,
    posterior_predict,
    run_mcmc,
)
from .evaluate import (
    FoldPlan,
    elementary_score,
    make_folds,
    murphy_diagram,
    nn_baseline,
    roc_auc,
    run_crossval,
    top_x_recovery,
    wilcoxon_paired_one_sided,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "PhylinkError", "ConfigError", "DataError", "NumericalError",
    "PhyloTree", "PairwiseMrcaDepths", "UnknownTip",
    "parse_newick", "serialize_newick", "prune_to", "relabel_tips",
    "pairwise_depths", "random_tree",
    "TransformSpec", "transform_legs", "transform_pair", "transform_matrix", "transform_scan",
    "InteractionRecord", "InteractionMatrix", "build_matrix",
    "drop_single_host_parasites", "temporal_split", "degree_distributions",
    "left_order", "read_edge_csv", "write_edge_csv", "read_matrix_csv", "write_matrix_csv",
    "AffinityPriors", "ModelState", "delta_weight", "delta_matrix",
    "interaction_prob", "gumbel_zero_inflated_logpdf", "sample_truncated_gumbel",
    "SamplerConfig", "PosteriorTrace", "run_mcmc", "posterior_predict",
    "generate_synthetic", "effective_sample_size",
    "FoldPlan", "make_folds", "elementary_score", "murphy_diagram", "roc_auc",
    "nn_baseline", "top_x_recovery", "wilcoxon_paired_one_sided", "run_crossval",
]
