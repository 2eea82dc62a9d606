"""Unsupervised graph-level anomaly detection with a cross-view transformer."""

from .config import ExperimentConfig
from .cvt import CvtConfig
from .encoders import EncoderConfig
from .graph_data import Dataset, Graph, assign_anomaly_labels, make_split, parse_tu_dataset
from .model import CVTGAD
from .objective import ScoreStats, anomaly_score, auc
from .views import ViewConfig

__all__ = [
    "CVTGAD", "CvtConfig", "Dataset", "EncoderConfig", "ExperimentConfig", "Graph",
    "ScoreStats", "ViewConfig", "anomaly_score", "assign_anomaly_labels", "auc",
    "make_split", "parse_tu_dataset",
]
__version__ = "0.1.0"
