"""Randomized agreement checks between the dynamic programs and enumeration."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ._logmath import NEG_INF
from .alignment import OperatorSet, path_log_likelihood
from .dp import Aggregation, DpConfig, latent_loss
from .oracle import MAX_CELLS, SizeGuardError, enumerate_paths, oracle_loss

REL_TOL = 1e-9


def random_instance(rng, n: int, m: int, vocab_range=(3, 7), spread: float = 2.0):
    """Random target (never the blank, id 0) and row-normalized log-probabilities."""
    V = int(rng.integers(vocab_range[0], vocab_range[1] + 1))
    logits = rng.normal(scale=spread, size=(m, V))
    logprobs = logits - np.logaddexp.reduce(logits, axis=1, keepdims=True)
    target = rng.integers(1, V, size=n).tolist()
    return target, logprobs


def rel_dev(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if NEG_INF in (a, b):
        return float("inf")
    return abs(a - b) / max(abs(b), 1e-300)


@dataclass
class OracleReport:
    cells: int = 0
    instances: int = 0
    max_rel_dev: float = 0.0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def oracle_check(max_n: int = 5, max_m: int = 5, trials: int = 100, seed: int = 0) -> OracleReport:
    """Compare sum and max aggregates with enumeration on every (n, m, preset, agg, causal) cell."""
    if max_n * max_m > MAX_CELLS:
        raise SizeGuardError(f"max_n*max_m = {max_n * max_m} exceeds {MAX_CELLS}")
    rng = np.random.default_rng(seed)
    report = OracleReport()
    presets = {"ctc": OperatorSet.ctc, "axe": OperatorSet.axe}
    for n, m in itertools.product(range(1, max_n + 1), range(1, max_m + 1)):
        for name, make in presets.items():
            full = set(enumerate_paths(n, m, make(False)))
            if not set(enumerate_paths(n, m, make(True))) <= full:
                report.failures.append(f"{name} n={n} m={m}: causal paths not a subset")
            for agg, causal in itertools.product(Aggregation, (False, True)):
                ops = make(causal)
                cfg = DpConfig(ops, agg, normalize_by_target_len=False)
                report.cells += 1
                label = f"{name} {agg.value} causal={causal} n={n} m={m}"
                for _ in range(trials):
                    target, logprobs = random_instance(rng, n, m)
                    report.instances += 1
                    got = latent_loss(target, logprobs, cfg)
                    ref = oracle_loss(target, logprobs, ops)
                    want = ref.sum_log if agg is Aggregation.SUM else ref.max_log
                    if not got.feasible or want == NEG_INF:
                        if got.feasible or want != NEG_INF:
                            report.failures.append(f"{label}: feasibility disagrees")
                        continue
                    dev = rel_dev(got.log_likelihood, want)
                    if agg is Aggregation.MAX:
                        path_ll = path_log_likelihood(target, logprobs, got.best_path)
                        dev = max(dev, rel_dev(path_ll, ref.max_log))
                    report.max_rel_dev = max(report.max_rel_dev, dev)
                    if dev >= REL_TOL:
                        report.failures.append(f"{label}: relative deviation {dev:.3g}")
    return report
