"""Inference-graph leakage check for validation and test target edges."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

from sklearn.base import BaseEstimator, TransformerMixin

from .graph import Graph, contains_edges, remove_edges
from .sampling import EdgeSplit

logger = logging.getLogger(__name__)

CLEAN = "clean"
LEAKED_AND_FIXED = "leaked-and-fixed"


@dataclass(frozen=True)
class AuditReport:
    valid_present: bool
    test_present: bool
    removed_test: int
    removed_valid: int
    keep_valid: bool
    verdict: str
    train_missing: int = 0

    def to_text(self) -> str:
        """``key=value`` lines, one per field, in declaration order."""
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"


def leakage_check(g: Graph, split: EdgeSplit, keep_valid: bool) -> tuple[Graph, AuditReport]:
    """Return an inference graph free of test edges, plus an audit report.

    Test edges present in ``g`` are always removed. Validation edges are
    removed too unless ``keep_valid`` is true. Orientation does not matter:
    ``(v, u)`` matches ``(u, v)``.
    """
    valid_present, _ = contains_edges(g, split.valid)
    test_present, _ = contains_edges(g, split.test)

    g_infer = g
    removed_test = removed_valid = 0
    if test_present:
        before = g_infer.num_edges
        g_infer = remove_edges(g_infer, split.test)
        removed_test = before - g_infer.num_edges
    if valid_present and not keep_valid:
        before = g_infer.num_edges
        g_infer = remove_edges(g_infer, split.valid)
        removed_valid = before - g_infer.num_edges

    train_missing = int(len(split.train) - g.has_edges(split.train).sum())
    if train_missing:
        logger.warning("%d train edges are absent from the audited graph", train_missing)

    verdict = CLEAN if not (valid_present or test_present) else LEAKED_AND_FIXED
    report = AuditReport(
        valid_present=valid_present,
        test_present=test_present,
        removed_test=removed_test,
        removed_valid=removed_valid,
        keep_valid=bool(keep_valid),
        verdict=verdict,
        train_missing=train_missing,
    )
    return g_infer, report


def assert_no_test_leakage(g: Graph, split: EdgeSplit) -> bool:
    """True iff no test edge is a message-passing edge of ``g``."""
    present, _ = contains_edges(g, split.test)
    return not present


class LeakageGuard(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`leakage_check`.

    ``fit`` records the split; ``transform`` maps a graph to its
    leakage-free inference graph and stores the last report in
    ``report_``.
    """

    def __init__(self, keep_valid: bool = False):
        self.keep_valid = keep_valid

    def fit(self, split: EdgeSplit, y=None):
        self.split_ = split
        return self

    def transform(self, g: Graph) -> Graph:
        g_infer, self.report_ = leakage_check(g, self.split_, self.keep_valid)
        return g_infer
