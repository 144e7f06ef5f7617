"""Cluster-aware attention-GRU forecasting of customer purchase intention.

Customers are grouped by the shape of their encoded daily purchase
patterns (k-shape), then one attention-GRU binary forecaster is trained per
group and all test windows are scored under a single top-N cut.
"""

from .data import (
    ActivityMatrix,
    PurchaseEvent,
    Windows,
    build_activity_matrix,
    chronological_split,
    ingest_transactions,
    make_windows,
    read_transactions,
)
from .encoder import PatternDictionary, build_dictionary, encode_matrix
from .errors import CagruError, ConfigError, DataError, NumericError
from .forecaster import ForecastModel, ModelConfig
from .kshape import ClusterModel, assign, kshape_cluster, ncc, sbd, z_normalize
from .metrics import MetricsReport, auc_score, compute_metrics, rand_index, top_n_threshold
from .pipeline import RunConfig, cluster_sweep, evaluate, run_ablation, run_pipeline
from .training import fit, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
