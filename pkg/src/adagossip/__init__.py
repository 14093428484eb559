"""Decentralized optimization with compressed gossip and adaptive consensus step-sizes."""

from .compression import CompressedPayload, CompressorSpec, compress, decompress, parse_compressor, payload_bytes
from .consensus import (
    GossipHyperParams,
    GossipState,
    adagossip_round,
    choco_gossip_round,
    consensus_distance,
    run_consensus,
)
from .data import Dataset, Partition, generate_synthetic_classification, load_dataset, partition_iid
from .harness import ExperimentConfig, MetricsRecord, parse_config, predicted_bytes_per_epoch, run_experiment, sweep
from .learning import (
    LearnerState,
    OptimizerConfig,
    adag_sgd_round,
    choco_sgd_round,
    deepsqueeze_round,
    dsgd_round,
    evaluate_consensus_model,
    local_sgd_step,
    lr_schedule,
)
from .models import ModelSpec, forward_backward
from .topology import (
    MixingMatrix,
    build_dyck,
    build_fully_connected,
    build_ring,
    build_torus,
    parse_topology,
    spectral_gap,
)

__version__ = "0.1.0"
