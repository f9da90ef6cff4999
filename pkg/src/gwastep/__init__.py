"""Stepwise model selection for case-control GWAS.

The package couples Firth-penalized logistic regression with the mbic2
criterion family and a ranking-directed stepwise search, plus the
simulation and evaluation machinery needed to study false discovery
behaviour of the selector.
"""

__version__ = "0.1.0"

from .criteria import Criterion, evaluate, mbic2, mbic_relaxed, penalty_increment
from .evaluate import (
    ClusterSet,
    EvalReport,
    EvalSummary,
    aggregate,
    c_cluster,
    evaluate_replicate,
    match_true_positives,
)
from .firth import (
    DesignSpec,
    FitResult,
    fit_firth,
    intercept_only_estimate,
    null_model_loglik,
    score_test,
)
from .genotype import (
    GenotypeMatrix,
    SnpMeta,
    load_plink,
    qc_filter,
    write_plink,
)
from .assoc import (
    Ranking,
    TrendResult,
    bh_reject,
    cochran_armitage,
    rank_conditional,
    rank_marginal,
    single_marker_bh,
)
from .search import (
    Model,
    SearchConfig,
    SelectionResult,
    fss,
    three_round_select,
)
from .simulate import (
    Scenario,
    build_trait_scenario,
    calibrate_intercept,
    generate_genotypes,
    pick_causal,
    remove_causal,
    simulate_null,
    simulate_trait,
)

__all__ = [
    "__version__",
    "Criterion", "evaluate", "mbic2", "mbic_relaxed", "penalty_increment",
    "ClusterSet", "EvalReport", "EvalSummary", "aggregate", "c_cluster",
    "evaluate_replicate", "match_true_positives",
    "DesignSpec", "FitResult", "fit_firth", "intercept_only_estimate",
    "null_model_loglik", "score_test",
    "GenotypeMatrix", "SnpMeta", "load_plink", "qc_filter", "write_plink",
    "Ranking", "TrendResult", "bh_reject", "cochran_armitage",
    "rank_conditional", "rank_marginal", "single_marker_bh",
    "Model", "SearchConfig", "SelectionResult", "fss", "three_round_select",
    "Scenario", "build_trait_scenario", "calibrate_intercept",
    "generate_genotypes", "pick_causal", "remove_causal",
    "simulate_null", "simulate_trait",
]
