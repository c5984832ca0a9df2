"""Classification of best alignment paths into trivial / degenerate / other."""

from __future__ import annotations

from collections import Counter

from ..alignment import AlignmentPath, OperatorKind

TRIVIAL = "trivial"
DEGENERATE = "degenerate"
OTHER = "other"


def classify_path(path: AlignmentPath) -> str:
    """``trivial``: all ALIGN.  ``degenerate``: DELIMITER, ALIGN x (n-1), CLONE_PREDICTION."""
    ops = path.ops
    if ops and all(op is OperatorKind.ALIGN for op in ops):
        return TRIVIAL
    if (
        len(ops) >= 2
        and ops[0] is OperatorKind.DELIMITER
        and ops[-1] is OperatorKind.CLONE_PREDICTION
        and all(op is OperatorKind.ALIGN for op in ops[1:-1])
    ):
        n, m = path.end
        if len(ops) == n + 1 and n == m:
            return DEGENERATE
    return OTHER


def pattern_rates(paths) -> dict[str, float]:
    counts = Counter(classify_path(p) for p in paths)
    total = sum(counts.values())
    if not total:
        return {TRIVIAL: float("nan"), DEGENERATE: float("nan"), OTHER: float("nan")}
    return {k: counts[k] / total for k in (TRIVIAL, DEGENERATE, OTHER)}


def deviation_summary(paths) -> Counter:
    """Counts of the non-ALIGN operator sequences found in ``other`` paths."""
    out = Counter()
    for p in paths:
        if classify_path(p) == OTHER:
            out[" ".join(op.value for op in p.ops if op is not OperatorKind.ALIGN)] += 1
    return out
