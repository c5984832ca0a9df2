"""(target, log-probability) instances and their JSON representation.

An instance file looks like::

    {"vocab": ["<eps>", "<eos>", "it", ...], "blank": "<eps>", "eos": "<eos>",
     "target": ["it", "is", ..., "<eos>"],
     "logprobs": [[-0.1, -3.2, ...], ...]}

``logprobs`` rows may use ``"-inf"`` (or the JSON extension ``-Infinity``)
for zero-probability tokens.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alignment import LogProbMatrix, TargetSeq, Vocab, unnormalized_rows


class InstanceError(ValueError):
    """Schema violation; ``field`` names the offending JSON location."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True, eq=False)
class Instance:
    vocab: Vocab
    target: TargetSeq
    logprobs: LogProbMatrix

    @property
    def n(self) -> int:
        return len(self.target)

    @property
    def m(self) -> int:
        return self.logprobs.m

    def to_dict(self) -> dict:
        rows = [[v if math.isfinite(v) else "-inf" for v in row] for row in self.logprobs.values.tolist()]
        return {
            "vocab": list(self.vocab.tokens),
            "blank": self.vocab.blank,
            "eos": self.vocab.eos,
            "target": self.vocab.decode(self.target.ids),
            "logprobs": rows,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def from_dict(cls, data) -> Instance:
        if not isinstance(data, dict):
            raise InstanceError("<root>", "expected a JSON object")
        for key in ("vocab", "blank", "eos", "target", "logprobs"):
            if key not in data:
                raise InstanceError(key, "missing field")
        tokens = data["vocab"]
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise InstanceError("vocab", "expected a list of strings")
        try:
            vocab = Vocab.from_tokens(tokens, data["blank"], data["eos"])
        except (ValueError, TypeError) as exc:
            raise InstanceError("vocab", str(exc)) from None

        target = data["target"]
        if not isinstance(target, list) or not target:
            raise InstanceError("target", "expected a non-empty list of tokens")
        lookup = {t: k for k, t in enumerate(vocab.tokens)}
        ids = []
        for pos, tok in enumerate(target):
            if tok not in lookup:
                raise InstanceError(f"target[{pos}]", f"unknown token {tok!r}")
            if lookup[tok] == vocab.blank_id:
                raise InstanceError(f"target[{pos}]", "targets never contain the blank token")
            ids.append(lookup[tok])

        rows = data["logprobs"]
        if not isinstance(rows, list) or not rows:
            raise InstanceError("logprobs", "expected a non-empty list of rows")
        values = np.empty((len(rows), len(vocab)))
        for r, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != len(vocab):
                raise InstanceError(f"logprobs[{r}]", f"expected {len(vocab)} numbers")
            for c, v in enumerate(row):
                if v == "-inf":
                    v = -math.inf
                if isinstance(v, bool) or not isinstance(v, (int, float)) or math.isnan(v):
                    raise InstanceError(f"logprobs[{r}][{c}]", f"not a log-probability: {v!r}")
                values[r, c] = v
        bad = unnormalized_rows(values)
        if bad:
            raise InstanceError(f"logprobs[{bad[0]}]", "row is not a normalized log-distribution")
        return cls(vocab, TargetSeq(ids), LogProbMatrix(values))

    @classmethod
    def load(cls, path) -> Instance:
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
        return cls.from_dict(data)


def from_top_tokens(
    target: list[str],
    columns: list[list[tuple[str, float]]],
    blank: str = "<eps>",
    eos: str = "<eos>",
    n_fillers: int = 16,
) -> Instance:
    """Build an instance from per-position (token, probability) listings.

    Each listed token receives its stated probability; the remaining mass of a
    row is shared evenly by ``n_fillers`` placeholder tokens, and every other
    token gets probability zero.
    """
    tokens = [blank, eos]
    for tok in target + [t for col in columns for t, _ in col]:
        if tok not in tokens:
            tokens.append(tok)
    if n_fillers < 1:
        raise ValueError("need at least one filler token")
    fillers = list(range(len(tokens), len(tokens) + n_fillers))
    tokens += [f"<filler{k}>" for k in range(n_fillers)]
    vocab = Vocab.from_tokens(tokens, blank, eos)
    probs = np.zeros((len(columns), len(vocab)))
    for j, col in enumerate(columns):
        listed = {vocab.index(t): p for t, p in col}
        residual = 1.0 - sum(listed.values())
        if residual <= 0:
            raise ValueError(f"column {j + 1} has no mass left for unlisted tokens")
        for k, p in listed.items():
            probs[j, k] = p
        probs[j, fillers] = residual / n_fillers
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    return Instance(vocab, TargetSeq(vocab.encode(target)), LogProbMatrix(logp))


def rainy_day_instance() -> Instance:
    """"it is rainy today" against a model that prefers "it is so rainy today".

    Only the top-4 token rankings are known for this example; probabilities are
    assigned by rank (0.55, 0.2, 0.12, 0.08).
    """
    ranked = [
        ["it", "however", "the", "but"],
        ["is", "the", "looks", "this"],
        ["so", "rain", "very", "<eps>"],
        ["rainy", "good", "and", "very"],
        ["today", "tonight", "<eos>", "good"],
    ]
    weights = (0.55, 0.2, 0.12, 0.08)
    columns = [list(zip(col, weights)) for col in ranked]
    return from_top_tokens(["it", "is", "rainy", "today", "<eos>"], columns)


def thank_you_instance() -> Instance:
    """Copy-model predictions for "thank you for listening ." with their top-4 probabilities."""
    columns = [
        [("<eps>", 0.999), ("<eos>", 8e-8), ("...", 8e-8), ("use", 7e-8)],
        [("thank", 0.995), ("'s", 5e-5), ("super@@", 2e-5), ("unfortunate", 2e-5)],
        [("you", 0.999), ("pre@@", 2e-7), ("ke", 2e-7), ("cu@@", 2e-7)],
        [("for", 0.999), ("is", 1e-5), ("audience", 6e-6), ("oil", 5e-6)],
        [("listening", 0.994), ("ver@@", 3e-5), ("taking", 2e-5), ("sever@@", 2e-5)],
        [(".", 0.627), ("<eos>", 0.370), ("...", 1e-4), ("'", 1e-4)],
    ]
    return from_top_tokens(["thank", "you", "for", "listening", ".", "<eos>"], columns)
