"""Target-edge exclusion for mini-batch GNN link prediction, with leakage auditing."""

__version__ = "0.1.0"

from .audit import AuditReport, LeakageGuard, assert_no_test_leakage, leakage_check
from .estimator import LinkPredictor, resolve_policy
from .gnn import ModelParams, bce_logit_loss, dot_decoder, gnn_forward, grad_check, init_params, train_step
from .graph import Graph, Subgraph, contains_edges, khop_message_graph, load_edge_list, remove_edges
from .metrics import auc, evaluate, hits_at_k, mrr, rank_positive, stratified_eval
from .sampling import (
    Batch,
    EdgeBatchSampler,
    EdgeSplit,
    ExclusionPolicy,
    apply_exclusion,
    low_degree_targets,
    match_random_rate,
    negative_sample,
    sample_batch,
)
from .synthetic import make_synthetic

