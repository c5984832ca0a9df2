import json

import numpy as np
import pytest

from latalign.instances import Instance, InstanceError, from_top_tokens, rainy_day_instance, thank_you_instance


def _doc():
    return {
        "vocab": ["<eps>", "<eos>", "a", "b"],
        "blank": "<eps>",
        "eos": "<eos>",
        "target": ["a", "<eos>"],
        "logprobs": [[-0.5, -2.0, -1.5, "-inf"], [np.log(0.25)] * 4],
    }


def _fix(doc):
    # make row 0 normalized after the edits above
    row = np.array([v if v != "-inf" else -np.inf for v in doc["logprobs"][0]], dtype=float)
    doc["logprobs"][0] = [float(v) if np.isfinite(v) else "-inf" for v in row - np.logaddexp.reduce(row)]
    return doc


def test_round_trip(tmp_path):
    inst = Instance.from_dict(_fix(_doc()))
    assert inst.n == 2 and inst.m == 2
    assert inst.logprobs.values[0, 3] == -np.inf
    path = tmp_path / "x.json"
    inst.save(path)
    again = Instance.load(path)
    np.testing.assert_array_equal(again.logprobs.values, inst.logprobs.values)
    assert again.target == inst.target and again.vocab == inst.vocab


@pytest.mark.parametrize(
    "edit, field",
    [
        (lambda d: d.pop("target"), "target"),
        (lambda d: d.update(vocab=["a", "a", "<eps>", "<eos>"]), "vocab"),
        (lambda d: d.update(target=["zzz"]), "target[0]"),
        (lambda d: d.update(target=["a", "<eps>"]), "target[1]"),
        (lambda d: d["logprobs"].append([0.0]), "logprobs[2]"),
        (lambda d: d["logprobs"][1].__setitem__(2, "x"), "logprobs[1][2]"),
        (lambda d: d["logprobs"][1].__setitem__(2, -5.0), "logprobs[1]"),
        (lambda d: d.update(blank="nope"), "vocab"),
    ],
)
def test_schema_errors_name_the_field(edit, field):
    doc = _fix(_doc())
    edit(doc)
    with pytest.raises(InstanceError) as exc:
        Instance.from_dict(doc)
    assert exc.value.field == field


def test_json_syntax_errors_report_line_and_column(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "vocab": [1,\n}')
    with pytest.raises(InstanceError, match=r"line 3 column 1"):
        Instance.load(path)


def test_json_infinity_literal_is_accepted():
    doc = _fix(_doc())
    text = json.dumps(doc).replace('"-inf"', "-Infinity")
    assert Instance.from_dict(json.loads(text)).logprobs.values[0, 3] == -np.inf


def test_from_top_tokens_keeps_listed_probabilities():
    inst = from_top_tokens(["x", "<eos>"], [[("x", 0.7)], [("<eos>", 0.6), ("x", 0.3)]], n_fillers=3)
    p = np.exp(inst.logprobs.values)
    assert p[0, inst.vocab.index("x")] == pytest.approx(0.7)
    assert p[1, inst.vocab.index("<eos>")] == pytest.approx(0.6)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        from_top_tokens(["x"], [[("x", 1.0)]])


def test_golden_instance_top_tokens():
    inst = rainy_day_instance()
    top = [inst.vocab.tokens[k] for k in inst.logprobs.values.argmax(axis=1)]
    assert top == ["it", "is", "so", "rainy", "today"]
    inst = thank_you_instance()
    p = np.exp(inst.logprobs.values)
    assert p[5, inst.vocab.index(".")] == pytest.approx(0.627)
    assert p[5, inst.vocab.index("<eos>")] == pytest.approx(0.370)
