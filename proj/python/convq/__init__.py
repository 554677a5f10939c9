"""Perceived conversation quality from wearable accelerometers and speaking status."""

from ._convq import (
    ConvqError,
    Pipeline,
    auc,
    bonferroni,
    coherence,
    cross_validate,
    gen_coupled_pair,
    global_convergence,
    granger,
    lagged_correlation,
    lasso,
    mutual_information,
    pcq_score,
    quantile_regression,
    qw_kappa,
    segment_turns,
    smote,
    spearman,
    stratified_folds,
    symmetric_convergence,
    synthesize,
    turn_features,
)

__all__ = [
    "ConvqError",
    "Pipeline",
    "auc",
    "bonferroni",
    "coherence",
    "cross_validate",
    "gen_coupled_pair",
    "global_convergence",
    "granger",
    "lagged_correlation",
    "lasso",
    "mutual_information",
    "pcq_score",
    "quantile_regression",
    "qw_kappa",
    "segment_turns",
    "smote",
    "spearman",
    "stratified_folds",
    "symmetric_convergence",
    "synthesize",
    "turn_features",
]
