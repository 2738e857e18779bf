"""Adaptive outlier exposure: numeric kernels, losses, OOD metrics and experiments."""

from ._aoe import (
    DivergenceUndefined,
    InvalidArgument,
    ParseError,
    PreconditionViolated,
    auroc,
    calibrate_threshold,
    config_hash,
    default_config_text,
    fpr_at_tpr,
    h_func,
    kl_divergence,
    log_sum_exp,
    loss_aoe,
    loss_oe,
    margin_contraction,
    msp_margin_bounds,
    optimal_temperature,
    oversoftening_mean_margin,
    run_experiment,
    run_theory_suite,
    score,
    softmax,
)

__all__ = [name for name in dir() if not name.startswith("_")]
