"""Objectives, the training loop and evaluation for the toy seq2seq model."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..dp import DpConfig, cross_entropy, cross_entropy_grad, value_and_grad
from . import analysis
from .decode import decode, hypothesis
from .model import ToyModel, doubled_inputs, teacher_forced_inputs
from .tasks import BLANK, Splits, TaskSpec, gen_dataset

log = logging.getLogger(__name__)


class Objective(enum.Enum):
    CE = "ce"
    AXE = "axe"
    AXE_CAUSAL = "axe-causal"
    CTC = "ctc"
    CTC_DOUBLED = "ctc-doubled"

    @property
    def dp_config(self) -> DpConfig | None:
        return {
            Objective.CE: None,
            Objective.AXE: DpConfig.axe(blank=BLANK),
            Objective.AXE_CAUSAL: DpConfig.axe(causal=True, blank=BLANK),
            Objective.CTC: DpConfig.ctc(blank=BLANK),
            Objective.CTC_DOUBLED: DpConfig.ctc(blank=BLANK),
        }[self]

    @property
    def uses_max(self) -> bool:
        return self in (Objective.AXE, Objective.AXE_CAUSAL)

    def decoder_inputs(self, target) -> list[int]:
        if self is Objective.CTC_DOUBLED:
            return doubled_inputs(target)
        return teacher_forced_inputs(target)


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    objective: Objective = Objective.AXE
    lr: float = 0.1
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    clip: float = 5.0
    optimizer: str = "sgd"
    d_model: int = 32
    hidden: int = 64
    embed_scale: float = 0.5
    patience: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        self.objective = Objective(self.objective)
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objective"] = self.objective.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        return cls(**data)


@dataclass
class ExampleOutcome:
    loss: float
    feasible: bool
    grads: dict | None
    path: object = None


def example_loss(model: ToyModel, source, target, objective: Objective, want_grad: bool = True):
    """Per-token loss for one example, with parameter gradients when requested."""
    with np.errstate(over="ignore", invalid="ignore"):
        logp, cache = model.forward(source, objective.decoder_inputs(target))
    if not np.isfinite(logp).all():
        raise DivergenceError("model produced non-finite log-probabilities")
    cfg = objective.dp_config
    if cfg is None:
        loss = cross_entropy(target, logp)
        dlogp = cross_entropy_grad(target, logp) if want_grad else None
        path = None
    else:
        result, dlogp = value_and_grad(target, logp, cfg)
        if not result.feasible:
            return ExampleOutcome(math.inf, False, None)
        loss, path = result.neg_log_loss, result.best_path
    grads = model.backward(cache, dlogp) if want_grad else None
    return ExampleOutcome(loss, True, grads, path)


def batch_loss_and_grad(model: ToyModel, batch, objective: Objective):
    """Mean per-token loss over the feasible examples of ``batch`` and its gradient."""
    total = 0.0
    grads = model.zeros_like()
    count = 0
    paths = []
    for ex in batch:
        out = example_loss(model, ex.source, ex.target, objective)
        if not out.feasible:
            continue
        count += 1
        total += out.loss
        for k, g in out.grads.items():
            grads[k] += g
        if out.path is not None:
            paths.append(out.path)
    if count:
        for g in grads.values():
            g /= count
    return (total / count if count else math.nan), grads, count, paths


class Optimizer:
    def __init__(self, cfg: TrainConfig, model: ToyModel):
        self.cfg = cfg
        self.t = 0
        if cfg.optimizer == "adam":
            self.m = model.zeros_like()
            self.v = model.zeros_like()

    def step(self, model: ToyModel, grads: dict) -> None:
        cfg = self.cfg
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if cfg.clip and norm > cfg.clip:
            grads = {k: g * (cfg.clip / norm) for k, g in grads.items()}
        self.t += 1
        for k, g in grads.items():
            if cfg.optimizer == "sgd":
                model.params[k] -= cfg.lr * g
                continue
            self.m[k] = cfg.beta1 * self.m[k] + (1 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1 - cfg.beta2) * g * g
            mhat = self.m[k] / (1 - cfg.beta1**self.t)
            vhat = self.v[k] / (1 - cfg.beta2**self.t)
            model.params[k] -= cfg.lr * mhat / (np.sqrt(vhat) + 1e-8)


@dataclass
class Metrics:
    epoch: int
    split: str
    loss: float
    empty_rate: float = math.nan
    exact_match: float = math.nan
    trivial_rate: float = math.nan
    degenerate_rate: float = math.nan

    CSV_FIELDS = ("epoch", "split", "loss", "empty_rate", "exact_match", "trivial_rate", "degenerate_rate")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def evaluate(
    model: ToyModel,
    examples,
    objective: Objective,
    epoch: int = 0,
    split: str = "valid",
    mode: str = "greedy",
    beam: int = 5,
    decode_outputs: bool = True,
) -> Metrics:
    """Objective loss, decoding rates and (for max objectives) alignment-pattern rates."""
    losses, paths = [], []
    for ex in examples:
        out = example_loss(model, ex.source, ex.target, objective, want_grad=False)
        if out.feasible:
            losses.append(out.loss)
        if out.path is not None:
            paths.append(out.path)
    metrics = Metrics(epoch, split, float(np.mean(losses)) if losses else math.nan)
    if paths:
        rates = analysis.pattern_rates(paths)
        metrics.trivial_rate = rates[analysis.TRIVIAL]
        metrics.degenerate_rate = rates[analysis.DEGENERATE]
    if decode_outputs and examples:
        empty = match = 0
        for ex in examples:
            hyp, finished = hypothesis(decode(model, ex.source, mode, beam))
            empty += not hyp
            match += finished and hyp == list(ex.target[:-1])
        metrics.empty_rate = empty / len(examples)
        metrics.exact_match = match / len(examples)
    return metrics


def alignment_pattern_stats(model: ToyModel, examples, objective: Objective) -> dict[str, float]:
    """Best-path class rates (trivial / degenerate / other) over ``examples``."""
    if not objective.uses_max:
        raise ValueError("alignment patterns need a max-aggregation objective")
    paths = []
    for ex in examples:
        out = example_loss(model, ex.source, ex.target, objective, want_grad=False)
        if out.path is not None:
            paths.append(out.path)
    return analysis.pattern_rates(paths)


@dataclass
class TrainResult:
    model: ToyModel
    history: list[Metrics] = field(default_factory=list)
    splits: Splits | None = None
    skipped: int = 0


def train(cfg: TrainConfig, task: TaskSpec | Splits, progress=None) -> TrainResult:
    """Train a fresh model; one train row and one valid row of metrics per epoch.

    The train row carries the running mean of the minibatch losses and the
    alignment-pattern rates of the paths used for those updates.
    """
    splits = gen_dataset(task) if isinstance(task, TaskSpec) else task
    vocab_size = task.vocab_size if isinstance(task, TaskSpec) else None
    if vocab_size is None:
        vocab_size = 1 + max(max(ex.source + ex.target) for ex in splits.train)
    rng = np.random.default_rng(cfg.seed)
    model = ToyModel.init(vocab_size, cfg.d_model, cfg.hidden, rng, cfg.embed_scale)
    opt = Optimizer(cfg, model)
    result = TrainResult(model, splits=splits)
    best_valid, bad_epochs, best_params = math.inf, 0, None

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(splits.train))
        losses, paths = [], []
        for start in range(0, len(order), cfg.batch_size):
            batch = [splits.train[k] for k in order[start : start + cfg.batch_size]]
            loss, grads, count, batch_paths = batch_loss_and_grad(model, batch, cfg.objective)
            result.skipped += len(batch) - count
            if not count:
                continue
            if not math.isfinite(loss) or any(not np.isfinite(g).all() for g in grads.values()):
                raise DivergenceError(f"non-finite loss or gradient in epoch {epoch}")
            losses.extend([loss] * count)
            paths.extend(batch_paths)
            opt.step(model, grads)

        train_row = Metrics(epoch, "train", float(np.mean(losses)) if losses else math.nan)
        if paths:
            rates = analysis.pattern_rates(paths)
            train_row.trivial_rate = rates[analysis.TRIVIAL]
            train_row.degenerate_rate = rates[analysis.DEGENERATE]
        valid_row = evaluate(model, splits.valid, cfg.objective, epoch, "valid")
        result.history += [train_row, valid_row]
        log.info("epoch %d train %.4f valid %.4f", epoch, train_row.loss, valid_row.loss)
        if progress:
            progress(train_row, valid_row)

        if cfg.patience is not None:
            if valid_row.loss < best_valid - 1e-9:
                best_valid, bad_epochs, best_params = valid_row.loss, 0, model.copy()
            else:
                bad_epochs += 1
                if bad_epochs >= cfg.patience:
                    break
    if best_params is not None:
        result.model = best_params
    return result
