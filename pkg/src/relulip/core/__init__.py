from .io import csv_text, format_float, json_text, write_csv, write_json
from .linalg import (
    INF,
    PowerIterationError,
    conjugate_exponent,
    format_p,
    gaussian_matrix,
    lp_norm,
    lp_norm_rows,
    operator_norm_2,
    parse_p,
)
from .parallel import map_trials
from .rng import RngStream, as_stream
from .stats import (
    SummaryStats,
    binomial_band,
    fit_loglog_slope,
    ks_critical_value,
    ks_two_sample,
)

__all__ = [
    "INF",
    "PowerIterationError",
    "RngStream",
    "SummaryStats",
    "as_stream",
    "binomial_band",
    "conjugate_exponent",
    "csv_text",
    "format_float",
    "json_text",
    "fit_loglog_slope",
    "format_p",
    "gaussian_matrix",
    "ks_critical_value",
    "ks_two_sample",
    "write_csv",
    "write_json",
    "lp_norm",
    "lp_norm_rows",
    "map_trials",
    "operator_norm_2",
    "parse_p",
]
