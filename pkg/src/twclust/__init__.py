"""Cluster-count selection for curve datasets under the TW dissimilarity."""

from .clustering import L2, TW, ClusterOptions, Clustering, cluster, l2_distance, recenter
from .data import FunctionalDataset, TimeGrid, dump_dataset, load_dataset, residuals
from .errors import CalibrationError, DataError, ParameterError, SelectionError
from .measure import (
    MeasureConfig,
    WindowSet,
    anova_mst_mse,
    build_windows,
    calibrate_m,
    t_parallelism,
    tau_hat_sq,
    tw_measure,
    w_mean_diff,
)
from .selection import (
    METHODS,
    CriterionTrace,
    SelectionInputs,
    bcs,
    ch_index,
    empirical_distortion,
    gap_statistic,
    hartigan_index,
    jump_selection,
    kl_index,
    select_k,
    silhouette,
    slope_heuristics,
    wcs,
)
from .simulation import SCENARIOS, FrequencyTable, ScenarioSpec, generate_scenario, monte_carlo

__version__ = "0.1.0"

__all__ = [
    "L2", "TW", "ClusterOptions", "Clustering", "cluster", "l2_distance", "recenter",
    "FunctionalDataset", "TimeGrid", "dump_dataset", "load_dataset", "residuals",
    "CalibrationError", "DataError", "ParameterError", "SelectionError",
    "MeasureConfig", "WindowSet", "anova_mst_mse", "build_windows", "calibrate_m",
    "t_parallelism", "tau_hat_sq", "tw_measure", "w_mean_diff",
    "METHODS", "CriterionTrace", "SelectionInputs", "bcs", "ch_index", "empirical_distortion",
    "gap_statistic", "hartigan_index", "jump_selection", "kl_index", "select_k", "silhouette",
    "slope_heuristics", "wcs",
    "SCENARIOS", "FrequencyTable", "ScenarioSpec", "generate_scenario", "monte_carlo",
]
