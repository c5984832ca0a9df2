import math

import numpy as np
import pytest

from latalign.alignment import AlignmentPath
from latalign.toy import analysis
from latalign.toy.decode import greedy_decode, hypothesis
from latalign.toy.model import copy_model
from latalign.toy.tasks import ambiguous_task, default_task, gen_dataset, identity_task
from latalign.toy.train import (
    DivergenceError,
    Metrics,
    Objective,
    TrainConfig,
    alignment_pattern_stats,
    evaluate,
    train,
)


@pytest.fixture(scope="module")
def ce_identity():
    task = identity_task(n_train=1000)
    cfg = TrainConfig(objective="ce", epochs=3, optimizer="adam", lr=0.01)
    return train(cfg, task)


def test_config_validation_and_round_trip():
    cfg = TrainConfig(objective="ctc-doubled", lr=0.05)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        TrainConfig(objective="mse")
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        TrainConfig(lr=0)


def test_path_classes():
    ops = lambda *o: AlignmentPath.from_ops(o)
    assert analysis.classify_path(ops("align", "align", "align")) == analysis.TRIVIAL
    assert analysis.classify_path(ops("delimiter", "align", "align", "clone_prediction")) == analysis.DEGENERATE
    # one delimiter quickly followed by one clone prediction
    dev = ops("align", "delimiter", "align", "clone_prediction", "align")
    assert analysis.classify_path(dev) == analysis.OTHER
    assert analysis.deviation_summary([dev]) == {"delimiter clone_prediction": 1}
    rates = analysis.pattern_rates([dev, ops("align")])
    assert rates == {"trivial": 0.5, "degenerate": 0.0, "other": 0.5}


def test_copy_model_paths_are_degenerate():
    task = default_task(n_train=100, n_valid=1, n_test=1)
    rates = alignment_pattern_stats(copy_model(task), gen_dataset(task).train, Objective.AXE)
    assert rates[analysis.DEGENERATE] == 1.0
    with pytest.raises(ValueError):
        alignment_pattern_stats(copy_model(task), [], Objective.CTC)


def test_ce_model_on_identity_task(ce_identity):
    model, test = ce_identity.model, ce_identity.splits.test
    m = evaluate(model, test, Objective.CE, split="test")
    assert m.exact_match >= 0.99
    for ex in test[:20]:
        assert greedy_decode(model, ex.source) == list(ex.source) + [ex.target[-1]]
    # the same rows judged by AXE pick the diagonal
    rates = alignment_pattern_stats(model, test, Objective.AXE)
    assert rates[analysis.TRIVIAL] >= 0.99


def test_metrics_rows_and_rates(ce_identity):
    rows = ce_identity.history
    assert [(r.epoch, r.split) for r in rows] == [(e, s) for e in (1, 2, 3) for s in ("train", "valid")]
    assert list(rows[1].row()) == list(Metrics.CSV_FIELDS)
    for r in rows:
        for k in ("empty_rate", "exact_match", "trivial_rate", "degenerate_rate"):
            v = getattr(r, k)
            assert math.isnan(v) or 0.0 <= v <= 1.0


def test_training_is_deterministic():
    task = default_task(n_train=64, n_valid=16, n_test=16)
    cfg = TrainConfig(objective="axe", epochs=2, batch_size=8)
    a, b = train(cfg, task), train(cfg, task)
    assert [r.row() for r in a.history] == [r.row() for r in b.history]
    for k in a.model.params:
        np.testing.assert_array_equal(a.model.params[k], b.model.params[k])


def test_divergence_aborts_with_a_diagnostic():
    task = default_task(n_train=32, n_valid=8, n_test=8)
    with pytest.raises(DivergenceError):
        train(TrainConfig(objective="axe", lr=1e200, clip=0, epochs=3), task)


def test_early_stopping_restores_the_best_model():
    task = default_task(n_train=64, n_valid=16, n_test=16)
    res = train(TrainConfig(objective="ce", epochs=6, patience=1, lr=0.5), task)
    valid = [r.loss for r in res.history if r.split == "valid"]
    final = evaluate(res.model, res.splits.valid, Objective.CE, decode_outputs=False).loss
    assert final == pytest.approx(min(valid))


def test_doubled_ctc_beats_cross_entropy_on_an_ambiguous_task():
    task = ambiguous_task(n_train=500)
    base = dict(lr=0.1, epochs=10, batch_size=16, seed=0)
    ce = train(TrainConfig(objective="ce", **base), task)
    ctc = train(TrainConfig(objective="ctc-doubled", **base), task)
    train_set = ce.splits.train
    ce_loss = evaluate(ce.model, train_set, Objective.CE, decode_outputs=False).loss
    ctc_loss = evaluate(ctc.model, train_set, Objective.CTC_DOUBLED, decode_outputs=False).loss
    assert ctc_loss < ce_loss
    # below what any model that actually translates could reach: ln(4) per content token
    floor = np.mean([(len(ex.target) - 1) / len(ex.target) * math.log(4) for ex in train_set])
    assert ctc_loss < floor
    # and it gets there by emitting nothing
    empty = np.mean([not hypothesis(greedy_decode(ctc.model, ex.source))[0] for ex in ctc.splits.test])
    assert empty >= 0.9
