"""Exhaustive enumeration of alignment paths for small instances.

Ground truth for the dynamic programs: every path is listed explicitly and
scored on its own, so nothing here shares structure with the lattice code.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._logmath import NEG_INF, logsumexp
from .alignment import (
    PREFERENCE,
    RANK,
    AlignmentPath,
    OperatorKind,
    OperatorSet,
    Step,
    _check_dims,
)

MAX_CELLS = 64
TIE_TOL = 1e-12


class SizeGuardError(ValueError):
    pass


def _guard(n: int, m: int) -> None:
    if n < 0 or m < 0:
        raise ValueError("lengths must be non-negative")
    if n * m > MAX_CELLS:
        raise SizeGuardError(f"n*m = {n * m} exceeds the enumeration limit {MAX_CELLS}")


def enumerate_paths(n: int, m: int, ops: OperatorSet) -> list[AlignmentPath]:
    """Every operator sequence from (0, 0) to (n, m) allowed by ``ops``."""
    _guard(n, m)
    return [AlignmentPath(steps) for steps in _paths(n, m, ops)]


@functools.lru_cache(maxsize=256)
def _paths(n, m, ops):
    found = []

    def extend(i, j, steps):
        if (i, j) == (n, m):
            found.append(tuple(steps))
            return
        for op in PREFERENCE:
            if op not in ops:
                continue
            di, dj = op.displacement
            ni, nj = i + di, j + dj
            if ni > n or nj > m:
                continue
            if op is OperatorKind.CLONE_TARGET and ni < 1:
                continue
            if op is OperatorKind.CLONE_PREDICTION and nj < 1:
                continue
            if ops.causal and op.consumes_target and ni < nj:
                continue
            steps.append(Step(op, ni, nj))
            extend(ni, nj, steps)
            steps.pop()

    extend(0, 0, [])
    return tuple(found)


def count_paths(n: int, m: int, ops: OperatorSet) -> int:
    """Path count by a memoized recursion over displacements (independent of enumerate_paths)."""

    @functools.lru_cache(maxsize=None)
    def count(i, j):
        if (i, j) == (0, 0):
            return 1
        total = 0
        for op in ops.enabled:
            di, dj = op.displacement
            pi, pj = i - di, j - dj
            if pi < 0 or pj < 0:
                continue
            if op is OperatorKind.CLONE_TARGET and i < 1:
                continue
            if op is OperatorKind.CLONE_PREDICTION and j < 1:
                continue
            if ops.causal and op.consumes_target and i < j:
                continue
            total += count(pi, pj)
        return total

    return count(n, m)


@dataclass(frozen=True, eq=False)
class EnumerationResult:
    paths: list[AlignmentPath]
    path_logs: np.ndarray
    sum_log: float
    max_log: float
    argmax_path: AlignmentPath | None


@functools.lru_cache(maxsize=256)
def _gather_index(n, m, ops):
    """Per-path (prediction row, target slot) index arrays, padded to equal length.

    Target slot ``i`` (1..n) means y_i; slot 0 means the blank token.  Padding
    points at an extra zero-valued cell.
    """
    paths = _paths(n, m, ops)
    width = max((len(p) for p in paths), default=0)
    rows = np.full((len(paths), width), m, dtype=np.intp)
    slots = np.zeros((len(paths), width), dtype=np.intp)
    for k, steps in enumerate(paths):
        for t, s in enumerate(steps):
            rows[k, t] = s.j - 1
            slots[k, t] = 0 if s.op is OperatorKind.DELIMITER else s.i
    return rows, slots


def _rank_key(path: AlignmentPath):
    # the lattice backtrace commits to the last step first
    return tuple(RANK[s.op] for s in reversed(path.steps))


def oracle_loss(
    target: Sequence[int], logprobs: np.ndarray, ops: OperatorSet, blank: int = 0
) -> EnumerationResult:
    """Score every enumerated path and aggregate by log-sum-exp and by max."""
    target = [int(k) for k in target]
    logprobs = np.asarray(logprobs, dtype=np.float64)
    _check_dims(target, logprobs)
    n, m = len(target), logprobs.shape[0]
    _guard(n, m)
    paths = [AlignmentPath(p) for p in _paths(n, m, ops)]
    if not paths:
        return EnumerationResult([], np.zeros(0), NEG_INF, NEG_INF, None)
    # emission table: column 0 is the blank, column i is y_i; extra zero row for padding
    table = np.zeros((m + 1, n + 1))
    table[:m, 0] = logprobs[:, blank]
    table[:m, 1:] = logprobs[:, target]
    rows, slots = _gather_index(n, m, ops)
    path_logs = table[rows, slots].sum(axis=1)
    sum_log = logsumexp(path_logs.tolist())
    max_log = float(path_logs.max())
    argmax = None
    if max_log != NEG_INF:
        near = [k for k in range(len(paths)) if path_logs[k] >= max_log - TIE_TOL]
        argmax = paths[min(near, key=lambda k: _rank_key(paths[k]))]
    return EnumerationResult(paths, path_logs, sum_log, max_log, argmax)
