"""Bisimulation metrics, Sinkhorn codes and prototype clustering."""

from ._cbm import (
    BisimMetric,
    ChReport,
    ConfigError,
    DegenerateClustering,
    FiniteMdp,
    ValueBoundReport,
    bisim_metric,
    ch_index,
    evaluate,
    load_mdp,
    mdp_from_arrays,
    median_pairwise_distance,
    nearest_prototype_assign,
    optimal_transport,
    optimal_values,
    random_mdp,
    resolve_config,
    save_mdp,
    sinkhorn_codes,
    sinkhorn_codes_from_distances,
    train,
    verify,
    verify_value_bounds,
)

__all__ = [
    "BisimMetric",
    "ChReport",
    "ConfigError",
    "DegenerateClustering",
    "FiniteMdp",
    "ValueBoundReport",
    "bisim_metric",
    "ch_index",
    "evaluate",
    "load_mdp",
    "mdp_from_arrays",
    "median_pairwise_distance",
    "nearest_prototype_assign",
    "optimal_transport",
    "optimal_values",
    "random_mdp",
    "resolve_config",
    "save_mdp",
    "sinkhorn_codes",
    "sinkhorn_codes_from_distances",
    "train",
    "verify",
    "verify_value_bounds",
]
