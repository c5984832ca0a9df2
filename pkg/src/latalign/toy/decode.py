"""Autoregressive decoding that feeds back the model's own previous output."""

from __future__ import annotations

import numpy as np

from .tasks import BLANK, BOS, EOS


def default_max_len(source) -> int:
    return 2 * len(source) + 2


def _ranked(logp: np.ndarray) -> np.ndarray:
    # stable sort keeps the lowest token id first on ties, like argmax
    return np.argsort(-logp, kind="stable")


def greedy_decode(model, source, max_len: int | None = None) -> list[int]:
    max_len = default_max_len(source) if max_len is None else max_len
    out: list[int] = []
    prev = BOS
    for _ in range(max_len):
        logp = model.step_logprobs(source, [prev])[0]
        tok = int(_ranked(logp)[0])
        out.append(tok)
        if tok == EOS:
            break
        prev = tok
    return out


def beam_decode(model, source, beam: int = 5, max_len: int | None = None) -> list[int]:
    """Keep the ``beam`` best hypotheses by accumulated log-probability."""
    if beam < 1:
        raise ValueError("beam size must be positive")
    max_len = default_max_len(source) if max_len is None else max_len
    # (score, tokens, finished)
    hyps: list[tuple[float, list[int], bool]] = [(0.0, [], False)]
    for _ in range(max_len):
        live = [h for h in hyps if not h[2]]
        if not live:
            break
        prevs = [h[1][-1] if h[1] else BOS for h in live]
        logp = model.step_logprobs(source, prevs)
        candidates = [h for h in hyps if h[2]]
        for (score, toks, _), row in zip(live, logp):
            for tok in _ranked(row)[:beam]:
                tok = int(tok)
                candidates.append((score + float(row[tok]), toks + [tok], tok == EOS))
        # stable sort: earlier candidates win ties, which keeps beam=1 identical to greedy
        candidates.sort(key=lambda h: -h[0])
        hyps = candidates[:beam]
    return max(hyps, key=lambda h: h[0])[1]


def decode(model, source, mode: str = "greedy", beam: int = 5, max_len: int | None = None):
    if mode == "greedy":
        return greedy_decode(model, source, max_len)
    if mode == "beam":
        return beam_decode(model, source, beam, max_len)
    raise ValueError(f"unknown decoding mode {mode!r}")


def strip_blanks(tokens, blank: int = BLANK) -> list[int]:
    return [t for t in tokens if t != blank]


def hypothesis(tokens) -> tuple[list[int], bool]:
    """Blank-free output up to (not including) ``<eos>``, and whether ``<eos>`` was emitted."""
    tokens = list(tokens)
    finished = EOS in tokens
    if finished:
        tokens = tokens[: tokens.index(EOS)]
    return strip_blanks(tokens), finished
