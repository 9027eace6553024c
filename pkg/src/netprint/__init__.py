"""Passive device fingerprinting from packet header statistics.

Pipeline: dissect captures into per-device TCP/IPv4 packet records, reduce
every run of five consecutive packets to four statistics (mean and
population standard deviation of ip length and TCP window), then train and
query a seeded random forest on the resulting instances.
"""

from .dataset import Dataset, SplitSpec, dedupe, read_instances, relabel, split, write_instances
from .errors import FormatError, NetprintError
from .evaluate import EvalReport, SyntheticProfile, evaluate, make_synthetic
from .fingerprint import (
    ExtractionConfig,
    Fingerprint,
    LabeledInstance,
    compute_fingerprint,
    extract_instances,
    window_packets,
)
from .forest import (
    ForestParams,
    RandomForest,
    best_split,
    load_model,
    predict,
    predict_proba,
    save_model,
    train,
)
from .ingest import (
    CaptureStats,
    MacAddress,
    PacketRecord,
    filter_by_mac,
    ingest_pcap,
    ingest_trace_csv,
)

__version__ = "0.1.0"

__all__ = [
    "CaptureStats",
    "Dataset",
    "EvalReport",
    "ExtractionConfig",
    "Fingerprint",
    "ForestParams",
    "FormatError",
    "LabeledInstance",
    "MacAddress",
    "NetprintError",
    "PacketRecord",
    "RandomForest",
    "SplitSpec",
    "SyntheticProfile",
    "best_split",
    "compute_fingerprint",
    "dedupe",
    "evaluate",
    "extract_instances",
    "filter_by_mac",
    "ingest_pcap",
    "ingest_trace_csv",
    "load_model",
    "make_synthetic",
    "predict",
    "predict_proba",
    "read_instances",
    "relabel",
    "save_model",
    "split",
    "train",
    "window_packets",
    "write_instances",
]
