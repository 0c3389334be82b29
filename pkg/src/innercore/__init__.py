"""Depth-based InnerCore discovery and centered-motif ranking on daily transaction graphs."""

__version__ = "0.1.0"

from .core import AlphaDecomposition, InnerCoreResult, KCoreResult, alpha_core, inner_core, k_core
from .depth import InverseCovariance, depth_vector, inverse_covariance, mhdo
from .graph import (AddressBook, CsvSchema, FeatureMatrix, LabelSet, SnapshotGraph, TemporalGraph,
                    compute_features, ingest_csv, load_labels)
from .motif import CenterRole, MotifCounts, enumerate_centers, induced_subgraph
from .ranking import NfIafTable, PercentileTable, nf_iaf, partition_by_label, percentile_ranks
from .temporal import (ExpansionDecaySeries, Pattern, anomaly_candidates, build_series,
                       classify_patterns, decay, expansion)

__all__ = [
    "AddressBook", "AlphaDecomposition", "CenterRole", "CsvSchema", "ExpansionDecaySeries",
    "FeatureMatrix", "InnerCoreResult", "InverseCovariance", "KCoreResult", "LabelSet",
    "MotifCounts", "NfIafTable", "Pattern", "PercentileTable", "SnapshotGraph", "TemporalGraph",
    "alpha_core", "anomaly_candidates", "build_series", "classify_patterns", "compute_features",
    "decay", "depth_vector", "enumerate_centers", "expansion", "induced_subgraph", "ingest_csv",
    "inner_core", "inverse_covariance", "k_core", "load_labels", "mhdo", "nf_iaf",
    "partition_by_label", "percentile_ranks",
]
