"""Monotonic alignments between a target sequence and a prediction sequence.

Cells of the alignment lattice are indexed ``(i, j)`` with ``0 <= i <= n`` target
tokens consumed and ``0 <= j <= m`` predictions consumed.  Target positions and
prediction positions are 1-based throughout this module, matching the lattice;
row ``j`` of a log-probability matrix is stored at array index ``j - 1``.

Four local operators move through the lattice::

    ALIGN             (i-1, j-1) -> (i, j)   emits y_i from p_j
    CLONE_TARGET      (i,   j-1) -> (i, j)   emits y_i from p_j again
    CLONE_PREDICTION  (i-1, j  ) -> (i, j)   reuses p_j to emit y_i
    DELIMITER         (i,   j-1) -> (i, j)   emits the blank token from p_j
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ROW_ATOL = 1e-6


class OperatorKind(enum.Enum):
    ALIGN = "align"
    CLONE_TARGET = "clone_target"
    CLONE_PREDICTION = "clone_prediction"
    DELIMITER = "delimiter"

    @property
    def displacement(self) -> tuple[int, int]:
        return _DISPLACEMENT[self]

    @property
    def consumes_target(self) -> bool:
        """True for operators whose factor is p_j(y_i) rather than p_j(blank)."""
        return self is not OperatorKind.DELIMITER


_DISPLACEMENT = {
    OperatorKind.ALIGN: (1, 1),
    OperatorKind.CLONE_TARGET: (0, 1),
    OperatorKind.CLONE_PREDICTION: (1, 0),
    OperatorKind.DELIMITER: (0, 1),
}

# Viterbi and oracle tie-break order, most preferred first.
PREFERENCE = (
    OperatorKind.ALIGN,
    OperatorKind.DELIMITER,
    OperatorKind.CLONE_TARGET,
    OperatorKind.CLONE_PREDICTION,
)
RANK = {op: r for r, op in enumerate(PREFERENCE)}


@dataclass(frozen=True)
class OperatorSet:
    """The operators a dynamic program may use, plus the causal restriction.

    With ``causal=True`` a target-consuming step landing in ``(i, j)`` requires
    ``i >= j``; delimiter steps emit no target token and are exempt.
    """

    enabled: frozenset[OperatorKind]
    causal: bool = False

    def __post_init__(self):
        enabled = frozenset(self.enabled)
        if OperatorKind.ALIGN not in enabled:
            raise ValueError("ALIGN must be enabled in every operator set")
        object.__setattr__(self, "enabled", enabled)

    @classmethod
    def ctc(cls, causal: bool = False) -> OperatorSet:
        return cls(
            frozenset({OperatorKind.ALIGN, OperatorKind.CLONE_TARGET, OperatorKind.DELIMITER}),
            causal,
        )

    @classmethod
    def axe(cls, causal: bool = False) -> OperatorSet:
        return cls(
            frozenset({OperatorKind.ALIGN, OperatorKind.CLONE_PREDICTION, OperatorKind.DELIMITER}),
            causal,
        )

    def __contains__(self, op: OperatorKind) -> bool:
        return op in self.enabled

    def allows(self, op: OperatorKind, i: int, j: int) -> bool:
        """Whether ``op`` may land in cell ``(i, j)`` (bounds aside)."""
        if op not in self.enabled:
            return False
        return not (self.causal and op.consumes_target and i < j)


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    blank_id: int
    eos_id: int

    def __post_init__(self):
        tokens = tuple(self.tokens)
        object.__setattr__(self, "tokens", tokens)
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        for name, idx in (("blank_id", self.blank_id), ("eos_id", self.eos_id)):
            if not 0 <= idx < len(tokens):
                raise ValueError(f"{name}={idx} is outside the vocabulary")
        if self.blank_id == self.eos_id:
            raise ValueError("blank and eos must be distinct tokens")

    @classmethod
    def from_tokens(cls, tokens: Iterable[str], blank: str, eos: str) -> Vocab:
        tokens = tuple(tokens)
        if blank not in tokens or eos not in tokens:
            raise ValueError("blank and eos must both appear in the vocabulary")
        return cls(tokens, tokens.index(blank), tokens.index(eos))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def blank(self) -> str:
        return self.tokens[self.blank_id]

    @property
    def eos(self) -> str:
        return self.tokens[self.eos_id]

    def index(self, token: str) -> int:
        return self.tokens.index(token)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        lookup = {t: k for k, t in enumerate(self.tokens)}
        return [lookup[t] for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[k] for k in ids]


@dataclass(frozen=True)
class TargetSeq:
    ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(k) for k in self.ids))
        if not self.ids:
            raise ValueError("target sequence must be non-empty")

    def check(self, vocab: Vocab) -> None:
        for pos, k in enumerate(self.ids, start=1):
            if not 0 <= k < len(vocab):
                raise ValueError(f"target[{pos}] = {k} is not a vocabulary index")
            if k == vocab.blank_id:
                raise ValueError(f"target[{pos}] is the blank token")

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


def unnormalized_rows(values: np.ndarray, atol: float = ROW_ATOL) -> list[int]:
    """0-based indices of rows whose log-sum-exp is not 0, or with positive entries."""
    v = np.asarray(values, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        top = v.max(axis=1, keepdims=True)
        lse = top[:, 0] + np.log(np.exp(v - top).sum(axis=1))
    bad = ~(np.abs(lse) <= atol) | (v > atol).any(axis=1)
    return [int(r) for r in np.flatnonzero(bad)]


@dataclass(frozen=True, eq=False)
class LogProbMatrix:
    """An ``m x |V|`` matrix of natural-log probabilities, one row per prediction."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError("log-probabilities must be a non-empty 2-d matrix")
        if np.isnan(values).any():
            raise ValueError("log-probabilities contain NaN")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        bad = unnormalized_rows(values)
        if bad:
            raise ValueError(f"row {bad[0] + 1} is not a normalized log-distribution")

    @property
    def m(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Step:
    op: OperatorKind
    i: int
    j: int

    def __str__(self) -> str:
        return f"{self.op.value}({self.i},{self.j})"


@dataclass(frozen=True)
class AlignmentPath:
    """Operator steps from cell (0, 0); each step records the cell it lands in."""

    steps: tuple[Step, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    @classmethod
    def from_ops(cls, ops: Iterable[OperatorKind | str]) -> AlignmentPath:
        i = j = 0
        steps = []
        for op in ops:
            op = OperatorKind(op)
            di, dj = op.displacement
            i, j = i + di, j + dj
            steps.append(Step(op, i, j))
        return cls(tuple(steps))

    @property
    def ops(self) -> list[OperatorKind]:
        return [s.op for s in self.steps]

    @property
    def end(self) -> tuple[int, int]:
        if not self.steps:
            return (0, 0)
        return (self.steps[-1].i, self.steps[-1].j)

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __str__(self) -> str:
        return " ".join(op.value for op in self.ops)


@dataclass(frozen=True)
class Violation:
    index: int  # 0-based position of the offending step, len(path) for end-of-path errors
    step: Step | None
    rule: str
    message: str

    def __str__(self) -> str:
        where = f"step {self.index} {self.step}" if self.step else f"end of path ({self.index} steps)"
        return f"{where}: [{self.rule}] {self.message}"


def validate_path(path: AlignmentPath, n: int, m: int, ops: OperatorSet) -> Violation | None:
    """Check ``path`` against the lattice ``(0..n) x (0..m)`` and ``ops``.

    Returns ``None`` when the path is valid, otherwise the first violation found.
    """
    i = j = 0
    for k, step in enumerate(path.steps):
        if step.op not in ops:
            return Violation(k, step, "operator", f"{step.op.value} is not enabled")
        di, dj = step.op.displacement
        i, j = i + di, j + dj
        if (step.i, step.j) != (i, j):
            return Violation(k, step, "displacement", f"expected to land in ({i},{j})")
        if i > n or j > m:
            return Violation(k, step, "bounds", f"cell ({i},{j}) outside ({n},{m})")
        if step.op is OperatorKind.CLONE_TARGET and i < 1:
            return Violation(k, step, "bounds", "no target token to clone")
        if step.op is OperatorKind.CLONE_PREDICTION and j < 1:
            return Violation(k, step, "bounds", "no prediction to clone")
        if ops.causal and step.op.consumes_target and i < j:
            return Violation(
                k, step, "causal", f"prediction {j} may not emit earlier target {i}"
            )
    if (i, j) != (n, m):
        return Violation(len(path), None, "end", f"path ends in ({i},{j}), not ({n},{m})")
    return None


@dataclass(frozen=True)
class Alignment:
    """Target position -> set of prediction positions, plus blank-emitting positions.

    ``spans[i - 1]`` holds the prediction positions aligned with target ``i``.
    A position reached by ``CLONE_TARGET`` after a delimiter on the same target
    leaves a blank-filled gap inside the span; a ``CLONE_PREDICTION`` that reuses
    a delimiter's prediction puts that position in both a span and ``unaligned``.
    Both come straight from the lattice recurrences and are accepted here.
    """

    spans: tuple[frozenset[int], ...]
    unaligned: frozenset[int] = field(default_factory=frozenset)
    m: int = 0

    def __post_init__(self):
        spans = tuple(frozenset(s) for s in self.spans)
        object.__setattr__(self, "spans", spans)
        object.__setattr__(self, "unaligned", frozenset(self.unaligned))
        for i, span in enumerate(spans, start=1):
            if not span:
                raise ValueError(f"target {i} is aligned with no prediction")
            gaps = set(range(min(span), max(span) + 1)) - span
            if gaps - self.unaligned:
                raise ValueError(f"target {i} is aligned with non-consecutive predictions")
        for i in range(1, len(spans)):
            if max(spans[i - 1]) > min(spans[i]):
                raise ValueError(f"targets {i} and {i + 1} cross")
        covered = set(self.unaligned).union(*spans) if spans else set(self.unaligned)
        if self.m and covered != set(range(1, self.m + 1)):
            missing = sorted(set(range(1, self.m + 1)) - covered)
            raise ValueError(f"prediction positions {missing} are not covered")

    def __getitem__(self, i: int) -> frozenset[int]:
        return self.spans[i - 1]

    @property
    def n(self) -> int:
        return len(self.spans)

    def as_tuple(self) -> tuple[int, ...]:
        """Single-position alignment as a tuple, e.g. ``(1, 2, 4, 5, 5)``."""
        if any(len(s) != 1 for s in self.spans):
            raise ValueError("alignment maps some target to several predictions")
        return tuple(next(iter(s)) for s in self.spans)


def path_to_alignment(path: AlignmentPath) -> Alignment:
    n, m = path.end
    spans: list[set[int]] = [set() for _ in range(n)]
    unaligned = set()
    for step in path.steps:
        if step.op is OperatorKind.DELIMITER:
            unaligned.add(step.j)
        else:
            if step.i < 1 or step.j < 1:
                raise ValueError(f"{step} does not emit a target from a prediction")
            spans[step.i - 1].add(step.j)
    return Alignment(tuple(frozenset(s) for s in spans), frozenset(unaligned), m)


def _check_dims(target: Sequence[int], logprobs: np.ndarray) -> None:
    if logprobs.ndim != 2:
        raise ValueError("log-probabilities must be a 2-d matrix")
    if len(target) < 1 or logprobs.shape[0] < 1:
        raise ValueError("target and predictions must be non-empty")
    vocab_size = logprobs.shape[1]
    for k in target:
        if not 0 <= k < vocab_size:
            raise ValueError(f"target id {k} outside a vocabulary of size {vocab_size}")


def step_factor(step: Step, target: Sequence[int], logprobs: np.ndarray, blank: int) -> float:
    """Log-factor a single step contributes."""
    row = logprobs[step.j - 1]
    if step.op is OperatorKind.DELIMITER:
        return float(row[blank])
    return float(row[target[step.i - 1]])


def path_log_likelihood(
    target: Sequence[int], logprobs: np.ndarray, path: AlignmentPath, blank: int = 0
) -> float:
    """Sum of the step log-factors along ``path``."""
    target = list(target)
    logprobs = np.asarray(logprobs, dtype=np.float64)
    _check_dims(target, logprobs)
    if path.end != (len(target), logprobs.shape[0]):
        raise ValueError(
            f"path ends in {path.end} but the instance is ({len(target)},{logprobs.shape[0]})"
        )
    return float(sum(step_factor(s, target, logprobs, blank) for s in path.steps))
