"""Context-aware learning to rank for cross-sectional currency momentum."""

import json as _json

from . import _core
from ._core import (
    Bundle,
    ConfigError,
    DataError,
    Error,
    MetricError,
    ModelError,
    NumericError,
    ShapeError,
    TrainingError,
    UsageError,
    decile_labels,
    feature_names,
    load_bundle,
    loss,
    model_names,
    ndcg_at_k,
    performance_summary,
    positional_encoding,
    rescale_to_target,
    risk_off,
    scaled_dot_attention,
    strategy_return,
    synthetic_panel,
    write_synthetic,
)

__all__ = [
    "Bundle", "ConfigError", "DataError", "Error", "MetricError", "ModelError", "NumericError",
    "ShapeError", "TrainingError", "UsageError", "decile_labels", "feature_names", "load_bundle",
    "loss", "model_names", "ndcg_at_k", "performance_summary", "positional_encoding",
    "rescale_to_target", "risk_off", "run", "scaled_dot_attention", "strategy_return",
    "synthetic_panel", "write_synthetic",
]


def run(prices, vix, models=None, **settings):
    """Walk-forward run over prices.csv / vix.csv.

    Keyword settings use the config-file keys, with dots written as
    double underscores (context__d_fc=[8, 16]) or passed via a dict:
    run(p, v, **{"context.d_fc": 8}).

    Returns a dict with report (parsed), training (parsed), series
    (per model: dates, returns, ndcg_long, ndcg_short), bundles (per
    model: one Bundle per walk-forward block) and risk_off_fraction.
    """
    keyed = {k.replace("__", "."): v for k, v in settings.items()}
    out = _core._run(str(prices), str(vix), models, keyed)
    out["report"] = _json.loads(out["report"])
    out["training"] = _json.loads(out["training"])
    return out

