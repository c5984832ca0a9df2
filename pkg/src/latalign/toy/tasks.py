"""Synthetic translation tasks with length-changing substitutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..alignment import Vocab

BLANK, EOS, BOS = 0, 1, 2
SPECIAL_TOKENS = ("<eps>", "<eos>", "<bos>")


def make_vocab(size: int) -> Vocab:
    if size <= len(SPECIAL_TOKENS):
        raise ValueError("vocabulary needs room for content tokens")
    tokens = SPECIAL_TOKENS + tuple(f"w{k:02d}" for k in range(size - len(SPECIAL_TOKENS)))
    return Vocab(tokens, BLANK, EOS)


@dataclass(frozen=True)
class TaskSpec:
    """Source alphabet and substitution rules for a synthetic task.

    ``table`` maps every source token id to the target ids it produces (one or
    two tokens).  Its keys are the source alphabet.  With ``distinct`` set, a
    source sentence never repeats a token.  ``variants`` optionally lists
    alternative outputs for some source tokens; the generator then picks one
    of ``table[src]`` and ``variants[src]`` uniformly at random, which gives the
    task irreducible per-token entropy.
    """

    table: dict[int, tuple[int, ...]]
    vocab_size: int = 24
    min_len: int = 4
    max_len: int = 10
    n_train: int = 2000
    n_valid: int = 200
    n_test: int = 200
    seed: int = 0
    distinct: bool = True
    variants: dict[int, tuple[tuple[int, ...], ...]] = field(default_factory=dict)

    def __post_init__(self):
        table = {int(k): tuple(int(t) for t in v) for k, v in dict(self.table).items()}
        object.__setattr__(self, "table", table)
        variants = {
            int(k): tuple(tuple(int(t) for t in alt) for alt in alts)
            for k, alts in dict(self.variants).items()
        }
        object.__setattr__(self, "variants", variants)
        self.check()

    def check(self) -> None:
        if not self.table:
            raise ValueError("substitution table is empty")
        content = range(len(SPECIAL_TOKENS), self.vocab_size)
        for src, out in self.table.items():
            if src not in content:
                raise ValueError(f"source token {src} is not a content token")
            for alt in (out,) + self.variants.get(src, ()):
                if not 1 <= len(alt) <= 2 or any(t not in content for t in alt):
                    raise ValueError(f"token {src} must map to one or two content tokens")
        if set(self.variants) - set(self.table):
            raise ValueError("variants given for tokens outside the source alphabet")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.distinct and self.max_len > len(self.table):
            raise ValueError("max_len exceeds the source alphabet for distinct sampling")

    @property
    def vocab(self) -> Vocab:
        return make_vocab(self.vocab_size)

    @property
    def has_expansion(self) -> bool:
        return any(len(v) == 2 for v in self.table.values())

    def translate(self, source, rng=None) -> tuple[int, ...]:
        """EOS-terminated target; without ``rng`` every token takes its table entry."""
        out = []
        for tok in source:
            alts = self.variants.get(tok)
            if alts and rng is not None:
                k = int(rng.integers(len(alts) + 1))
                out.extend(self.table[tok] if k == 0 else alts[k - 1])
            else:
                out.extend(self.table[tok])
        return tuple(out) + (EOS,)

    def to_dict(self) -> dict:
        return {
            "table": {str(k): list(v) for k, v in self.table.items()},
            "vocab_size": self.vocab_size,
            "min_len": self.min_len,
            "max_len": self.max_len,
            "n_train": self.n_train,
            "n_valid": self.n_valid,
            "n_test": self.n_test,
            "seed": self.seed,
            "distinct": self.distinct,
            "variants": {str(k): [list(a) for a in v] for k, v in self.variants.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> TaskSpec:
        data = dict(data)
        preset = data.pop("preset", None)
        if preset is not None:
            if "table" in data:
                raise ValueError("give either a preset or a table, not both")
            if preset not in PRESETS:
                raise ValueError(f"unknown task preset {preset!r}; choose from {sorted(PRESETS)}")
            return PRESETS[preset](**data)
        if "table" not in data:
            return default_task(**data)
        data["table"] = {int(k): tuple(v) for k, v in data["table"].items()}
        data["variants"] = {
            int(k): tuple(tuple(a) for a in v) for k, v in data.get("variants", {}).items()
        }
        return cls(**data)


def default_task(**overrides) -> TaskSpec:
    """15 source tokens; the last three each expand into two reserved target tokens.

    Every target token identifies the source token it came from, so a decoder
    that sees the source can always tell where it is.
    """
    vocab_size = overrides.pop("vocab_size", 24)
    n_expanding = overrides.pop("n_expanding", 3)
    first = len(SPECIAL_TOKENS)
    n_source = vocab_size - first - 2 * n_expanding
    table = {first + k: (first + k,) for k in range(n_source - n_expanding)}
    reserved = first + n_source
    for e in range(n_expanding):
        src = first + n_source - n_expanding + e
        table[src] = (reserved + 2 * e, reserved + 2 * e + 1)
    return TaskSpec(table=table, vocab_size=vocab_size, **overrides)


def identity_task(**overrides) -> TaskSpec:
    vocab_size = overrides.pop("vocab_size", 24)
    table = {k: (k,) for k in range(len(SPECIAL_TOKENS), vocab_size)}
    return TaskSpec(table=table, vocab_size=vocab_size, **overrides)


def ambiguous_task(**overrides) -> TaskSpec:
    """Each source token has ``n_choices`` private target tokens, picked uniformly at random.

    The best any honest model can do is ``ln(n_choices)`` nats per content token.
    """
    first = len(SPECIAL_TOKENS)
    n_source = overrides.pop("n_source", 8)
    k = overrides.pop("n_choices", 4)
    out = [first + n_source + k * s for s in range(n_source)]
    table = {first + s: (out[s],) for s in range(n_source)}
    variants = {first + s: tuple((out[s] + c,) for c in range(1, k)) for s in range(n_source)}
    overrides.setdefault("max_len", min(8, n_source))
    overrides.setdefault("vocab_size", first + (k + 1) * n_source)
    return TaskSpec(table=table, variants=variants, **overrides)


PRESETS = {"default": default_task, "identity": identity_task, "ambiguous": ambiguous_task}


@dataclass(frozen=True)
class Example:
    source: tuple[int, ...]
    target: tuple[int, ...]


class Splits(NamedTuple):
    train: list[Example]
    valid: list[Example]
    test: list[Example]


def gen_dataset(task: TaskSpec) -> Splits:
    """Draw distinct source sentences and split them into train/valid/test."""
    task.check()
    rng = np.random.default_rng(task.seed)
    alphabet = np.array(sorted(task.table))
    total = task.n_train + task.n_valid + task.n_test
    seen: set[tuple[int, ...]] = set()
    sources: list[tuple[int, ...]] = []
    attempts = 0
    while len(sources) < total:
        attempts += 1
        if attempts > 50 * total + 1000:
            raise ValueError("task cannot produce enough distinct source sentences")
        length = int(rng.integers(task.min_len, task.max_len + 1))
        src = tuple(int(t) for t in rng.choice(alphabet, size=length, replace=not task.distinct))
        if src in seen:
            continue
        seen.add(src)
        sources.append(src)
    # a separate stream, so adding variants leaves the source sentences unchanged
    pick = np.random.default_rng([task.seed, 1])
    examples = [Example(src, task.translate(src, pick)) for src in sources]
    a, b = task.n_train, task.n_train + task.n_valid
    return Splits(examples[:a], examples[a:b], examples[b:])


def mean_target_length(examples) -> float:
    return float(np.mean([len(ex.target) for ex in examples]))
