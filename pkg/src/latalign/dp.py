"""Sum and max aggregation over monotonic alignments by dynamic programming.

The lattice ``A`` has shape ``(n + 1, m + 1)`` with ``A[0, 0] = 0`` and every
other cell starting at ``-inf``; ``A[i, j]`` is the log-aggregate over all
operator paths from ``(0, 0)`` to ``(i, j)``.  The answer is ``A[n, m]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._logmath import NEG_INF, logsumexp
from .alignment import (
    PREFERENCE,
    AlignmentPath,
    OperatorKind,
    OperatorSet,
    Step,
    _check_dims,
)

TIE_TOL = 1e-12

ALIGN = OperatorKind.ALIGN
CLONE_TARGET = OperatorKind.CLONE_TARGET
CLONE_PREDICTION = OperatorKind.CLONE_PREDICTION
DELIMITER = OperatorKind.DELIMITER


class Aggregation(enum.Enum):
    SUM = "sum"
    MAX = "max"


class NoValidPathError(ValueError):
    """Raised by gradient routines when no alignment path connects (0,0) to (n,m)."""


@dataclass(frozen=True)
class DpConfig:
    ops: OperatorSet
    aggregation: Aggregation = Aggregation.SUM
    normalize_by_target_len: bool = True
    blank: int = 0

    @classmethod
    def ctc(cls, causal: bool = False, **kw) -> DpConfig:
        return cls(OperatorSet.ctc(causal), Aggregation.SUM, **kw)

    @classmethod
    def axe(cls, causal: bool = False, **kw) -> DpConfig:
        return cls(OperatorSet.axe(causal), Aggregation.MAX, **kw)


@dataclass(frozen=True, eq=False)
class DpResult:
    """Outcome of one dynamic program.

    ``neg_log_loss`` is ``+inf`` with ``feasible=False`` when no path exists.
    ``best_path`` is only set for max aggregation.
    """

    neg_log_loss: float
    feasible: bool
    n: int
    normalized: bool
    best_path: AlignmentPath | None = None
    table: np.ndarray | None = None

    @property
    def log_likelihood(self) -> float:
        """Unnormalized log of the aggregate, i.e. ``A[n, m]``."""
        scale = self.n if self.normalized else 1
        return -self.neg_log_loss * scale


def _incoming(i, j, ops: OperatorSet):
    """Enabled operators that may land in (i, j), in tie-break order."""
    out = []
    for op in PREFERENCE:
        di, dj = op.displacement
        if i - di < 0 or j - dj < 0 or j < 1:
            continue
        if op.consumes_target and i < 1:
            continue
        if ops.allows(op, i, j):
            out.append(op)
    return out


def _emissions(target, logprobs, blank):
    # tgt[i-1][j-1] = log p_j(y_i); eps[j-1] = log p_j(blank)
    tgt = logprobs[:, list(target)].T.tolist()
    eps = logprobs[:, blank].tolist()
    return tgt, eps


def _factor(op, i, j, tgt, eps):
    if op is DELIMITER:
        return eps[j - 1]
    return tgt[i - 1][j - 1]


def _forward(target, logprobs, cfg: DpConfig):
    """Fill the lattice; for max aggregation also return backpointers."""
    n, m = len(target), logprobs.shape[0]
    tgt, eps = _emissions(target, logprobs, cfg.blank)
    use_max = cfg.aggregation is Aggregation.MAX
    A = [[NEG_INF] * (m + 1) for _ in range(n + 1)]
    back = [[None] * (m + 1) for _ in range(n + 1)] if use_max else None
    A[0][0] = 0.0
    for i in range(n + 1):
        for j in range(m + 1):
            if i == 0 and j == 0:
                continue
            scores = []
            for op in _incoming(i, j, cfg.ops):
                di, dj = op.displacement
                prev = A[i - di][j - dj]
                if prev == NEG_INF:
                    continue
                scores.append((op, prev + _factor(op, i, j, tgt, eps)))
            if not scores:
                continue
            if use_max:
                best = max(s for _, s in scores)
                if best == NEG_INF:
                    continue
                # scores are already in preference order
                op, s = next((op, s) for op, s in scores if s >= best - TIE_TOL)
                A[i][j] = s
                back[i][j] = op
            else:
                A[i][j] = logsumexp(s for _, s in scores)
    return A, back, tgt, eps


def _backtrace(back, n, m) -> AlignmentPath:
    steps = []
    i, j = n, m
    while (i, j) != (0, 0):
        op = back[i][j]
        steps.append(Step(op, i, j))
        di, dj = op.displacement
        i, j = i - di, j - dj
    return AlignmentPath(tuple(reversed(steps)))


def _prepare(target, logprobs):
    target = [int(k) for k in target]
    logprobs = np.asarray(logprobs, dtype=np.float64)
    _check_dims(target, logprobs)
    if np.isnan(logprobs).any() or (logprobs == np.inf).any():
        raise ValueError("log-probabilities contain NaN or +inf")
    return target, logprobs


def latent_loss(
    target: Sequence[int], logprobs: np.ndarray, cfg: DpConfig, keep_table: bool = False
) -> DpResult:
    """Negative log of the sum- or max-aggregated alignment likelihood."""
    target, logprobs = _prepare(target, logprobs)
    return _result(target, logprobs, cfg, keep_table)[0]


def _result(target, logprobs, cfg, keep_table=False):
    n, m = len(target), logprobs.shape[0]
    if not 0 <= cfg.blank < logprobs.shape[1]:
        raise ValueError(f"blank id {cfg.blank} outside the vocabulary")
    A, back, tgt, eps = _forward(target, logprobs, cfg)
    total = A[n][m]
    feasible = total != NEG_INF
    scale = n if cfg.normalize_by_target_len else 1
    loss = -total / scale if feasible else math.inf
    best = None
    if feasible and back is not None:
        best = _backtrace(back, n, m)
    table = np.array(A) if keep_table else None
    result = DpResult(loss, feasible, n, cfg.normalize_by_target_len, best, table)
    return result, A, tgt, eps


def _sum_grad(target, logprobs, cfg, A, tgt, eps):
    n, m = len(target), logprobs.shape[0]
    ops = cfg.ops
    # Bk[i][j]: log-sum over suffix paths from (i, j) to (n, m)
    Bk = [[NEG_INF] * (m + 1) for _ in range(n + 1)]
    Bk[n][m] = 0.0
    grad = np.zeros_like(logprobs)
    log_z = A[n][m]
    for i in range(n, -1, -1):
        for j in range(m, -1, -1):
            if (i, j) == (n, m):
                continue
            terms = []
            for op in PREFERENCE:
                if op not in ops:
                    continue
                di, dj = op.displacement
                ni, nj = i + di, j + dj
                if ni > n or nj > m or nj < 1:
                    continue
                if op.consumes_target and ni < 1:
                    continue
                if not ops.allows(op, ni, nj) or Bk[ni][nj] == NEG_INF:
                    continue
                f = _factor(op, ni, nj, tgt, eps)
                terms.append(f + Bk[ni][nj])
                if A[i][j] != NEG_INF:
                    occ = math.exp(A[i][j] + f + Bk[ni][nj] - log_z)
                    v = cfg.blank if op is DELIMITER else target[ni - 1]
                    grad[nj - 1, v] -= occ
            Bk[i][j] = logsumexp(terms)
    return grad, Bk


def value_and_grad(
    target: Sequence[int], logprobs: np.ndarray, cfg: DpConfig
) -> tuple[DpResult, np.ndarray | None]:
    """Loss and its gradient w.r.t. ``logprobs``; the gradient is None if infeasible.

    For sum aggregation the gradient is the exact forward-backward posterior
    occupancy (negated).  For max aggregation it is the gradient of the
    backtraced best path's log-likelihood, a subgradient of the max.
    """
    target, logprobs = _prepare(target, logprobs)
    result, A, tgt, eps = _result(target, logprobs, cfg)
    if not result.feasible:
        return result, None
    if cfg.aggregation is Aggregation.SUM:
        grad, _ = _sum_grad(target, logprobs, cfg, A, tgt, eps)
    else:
        grad = path_grad(target, logprobs.shape, result.best_path, cfg.blank)
    if cfg.normalize_by_target_len:
        grad /= len(target)
    return result, grad


def path_grad(target, shape, path: AlignmentPath, blank: int = 0) -> np.ndarray:
    """Gradient of ``-path_log_likelihood`` w.r.t. the log-probabilities."""
    grad = np.zeros(shape)
    for s in path.steps:
        v = blank if s.op is DELIMITER else target[s.i - 1]
        grad[s.j - 1, v] -= 1.0
    return grad


def ctc_grad(target: Sequence[int], logprobs: np.ndarray, cfg: DpConfig) -> np.ndarray:
    if cfg.aggregation is not Aggregation.SUM:
        raise ValueError("ctc_grad needs sum aggregation")
    result, grad = value_and_grad(target, logprobs, cfg)
    if grad is None:
        raise NoValidPathError("no valid alignment path")
    return grad


def axe_grad(target: Sequence[int], logprobs: np.ndarray, cfg: DpConfig) -> np.ndarray:
    if cfg.aggregation is not Aggregation.MAX:
        raise ValueError("axe_grad needs max aggregation")
    result, grad = value_and_grad(target, logprobs, cfg)
    if grad is None:
        raise NoValidPathError("no valid alignment path")
    return grad


def cross_entropy(target: Sequence[int], logprobs: np.ndarray, normalize: bool = True) -> float:
    """Per-token (or summed) cross entropy of the diagonal pairing, requires m = n."""
    target, logprobs = _prepare(target, logprobs)
    if logprobs.shape[0] != len(target):
        raise ValueError("cross entropy needs one prediction per target token")
    total = -float(math.fsum(logprobs[np.arange(len(target)), target]))
    return total / len(target) if normalize else total


def cross_entropy_grad(target: Sequence[int], logprobs: np.ndarray, normalize: bool = True):
    target, logprobs = _prepare(target, logprobs)
    grad = np.zeros_like(logprobs)
    grad[np.arange(len(target)), target] = -1.0
    return grad / len(target) if normalize else grad


def expected_emissions(target: Sequence[int], logprobs: np.ndarray, cfg: DpConfig) -> np.ndarray:
    """Posterior expected number of emissions at each prediction, under sum aggregation."""
    cfg = DpConfig(cfg.ops, Aggregation.SUM, False, cfg.blank)
    return -ctc_grad(target, logprobs, cfg).sum(axis=1)
