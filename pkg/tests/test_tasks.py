import json

import numpy as np
import pytest

from latalign.toy.tasks import (
    BLANK,
    EOS,
    TaskSpec,
    ambiguous_task,
    default_task,
    gen_dataset,
    identity_task,
    make_vocab,
    mean_target_length,
)


def test_vocab_layout():
    v = make_vocab(6)
    assert v.tokens[:3] == ("<eps>", "<eos>", "<bos>")
    assert v.blank_id == BLANK and v.eos_id == EOS
    with pytest.raises(ValueError):
        make_vocab(3)


def test_identity_task_targets_are_sources_plus_eos():
    splits = gen_dataset(identity_task(n_train=50, n_valid=5, n_test=5))
    for ex in splits.train + splits.valid + splits.test:
        assert ex.target == ex.source + (EOS,)


def test_expansion_rule():
    task = TaskSpec(table={3: (4, 5), 4: (4,), 5: (5,)}, vocab_size=6, min_len=1, max_len=2, distinct=False)
    assert task.translate((3, 3)) == (4, 5, 4, 5, EOS)
    assert task.has_expansion


def test_generation_is_byte_identical_for_a_seed():
    task = default_task(n_train=100, n_valid=20, n_test=20, seed=5)
    a, b = gen_dataset(task), gen_dataset(task)
    dump = lambda s: json.dumps([[ex.source, ex.target] for part in s for ex in part])
    assert dump(a) == dump(b)
    assert dump(a) != dump(gen_dataset(default_task(n_train=100, n_valid=20, n_test=20, seed=6)))


def test_splits_are_disjoint_and_targets_not_shorter():
    splits = gen_dataset(default_task())
    sets = [{ex.source for ex in part} for part in splits]
    assert len(sets[0]) == 2000 and len(sets[1]) == len(sets[2]) == 200
    assert not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])
    for ex in splits.train:
        assert len(ex.target) >= len(ex.source)
        assert ex.target[-1] == EOS and BLANK not in ex.target


def test_default_task_shape():
    task = default_task()
    assert task.vocab_size == 24 and (task.min_len, task.max_len) == (4, 10)
    assert task.has_expansion
    nbar = mean_target_length(gen_dataset(task).train)
    assert 8 <= nbar <= 14


def test_invalid_specs():
    with pytest.raises(ValueError, match="empty"):
        TaskSpec(table={})
    with pytest.raises(ValueError):
        TaskSpec(table={3: (0,)}, vocab_size=5, max_len=1)
    with pytest.raises(ValueError):
        TaskSpec(table={3: (3, 3, 3)}, vocab_size=5, max_len=1)
    with pytest.raises(ValueError):
        TaskSpec(table={3: (3,)}, vocab_size=5, max_len=4)
    with pytest.raises(ValueError):
        TaskSpec(table={3: (3,)}, vocab_size=5, min_len=0, max_len=1)


def test_dict_round_trip_and_presets():
    task = ambiguous_task(n_train=10)
    assert TaskSpec.from_dict(json.loads(json.dumps(task.to_dict()))) == task
    assert TaskSpec.from_dict({"preset": "identity", "n_train": 3}) == identity_task(n_train=3)
    assert TaskSpec.from_dict({}) == default_task()
    with pytest.raises(ValueError):
        TaskSpec.from_dict({"preset": "bogus"})


def test_ambiguous_task_draws_from_private_choices():
    task = ambiguous_task(n_train=300, n_valid=10, n_test=10)
    choices = {s: {task.table[s][0]} | {a[0] for a in task.variants[s]} for s in task.table}
    assert all(len(c) == 4 for c in choices.values())
    seen = {s: set() for s in task.table}
    for ex in gen_dataset(task).train:
        assert len(ex.target) == len(ex.source) + 1
        for s, t in zip(ex.source, ex.target):
            assert t in choices[s]
            seen[s].add(t)
    assert all(seen[s] == choices[s] for s in task.table)
    # variants never disturb the sources themselves
    plain = TaskSpec(**{**task.__dict__, "variants": {}})
    assert [ex.source for ex in gen_dataset(plain).train] == [ex.source for ex in gen_dataset(task).train]
