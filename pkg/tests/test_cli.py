import csv
import json
from pathlib import Path

import numpy as np
import pytest

from latalign.cli import EXIT_ACCEPTANCE, EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION, main
from latalign.dp import DpConfig, cross_entropy, latent_loss
from latalign.instances import Instance, rainy_day_instance, thank_you_instance
from latalign.alignment import LogProbMatrix, TargetSeq, Vocab

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def thanks_file(tmp_path):
    path = tmp_path / "thanks.json"
    thank_you_instance().save(path)
    return path


@pytest.fixture
def rainy_file(tmp_path):
    path = tmp_path / "rainy.json"
    rainy_day_instance().save(path)
    return path


def random_instance_file(tmp_path, n, m, seed=0, name="rand.json"):
    rng = np.random.default_rng(seed)
    tokens = ("<eps>", "<eos>", "a", "b", "c")
    z = rng.normal(size=(m, len(tokens)))
    inst = Instance(
        Vocab(tokens, 0, 1),
        TargetSeq(rng.integers(1, len(tokens), size=n).tolist()),
        LogProbMatrix(z - np.logaddexp.reduce(z, axis=1, keepdims=True)),
    )
    path = tmp_path / name
    inst.save(path)
    return path, inst


def test_loss_prints_the_thank_you_trace(capsys, tmp_path, thanks_file):
    code, out, _ = run(capsys, "loss", thanks_file, "--objective", "axe", "--out-dir", tmp_path / "o")
    assert code == EXIT_OK
    assert "delimiter align align align align align clone_prediction" in out
    assert "2 3 4 5 6 6" in out


def test_loss_adds_no_numerics(capsys, tmp_path, thanks_file):
    inst = Instance.load(thanks_file)
    for flags, cfg in [
        ([], DpConfig.axe()),
        (["--causal"], DpConfig.axe(causal=True)),
        (["--objective", "ctc", "--no-normalize"], DpConfig.ctc(normalize_by_target_len=False)),
    ]:
        code, out, _ = run(capsys, "loss", thanks_file, *flags, "--format", "json", "--out-dir", tmp_path)
        assert code == EXIT_OK
        want = latent_loss(inst.target.ids, inst.logprobs.values, cfg).neg_log_loss
        assert json.loads(out)["neg_log_loss"] == want


def test_ctc_on_a_square_instance_equals_the_cross_entropy_reference(capsys, tmp_path):
    path, inst = random_instance_file(tmp_path, 6, 6)
    _, ctc_out, _ = run(capsys, "loss", path, "--objective", "ctc", "--format", "json", "--out-dir", tmp_path)
    _, ce_out, _ = run(capsys, "loss", path, "--objective", "ce", "--format", "json", "--out-dir", tmp_path)
    ctc, ce = json.loads(ctc_out)["neg_log_loss"], json.loads(ce_out)["neg_log_loss"]
    assert abs(ctc - ce) < 1e-12
    assert ce == cross_entropy(inst.target.ids, inst.logprobs.values)


def test_no_valid_path_is_reported(capsys, tmp_path):
    path, _ = random_instance_file(tmp_path, 4, 2)
    code, out, _ = run(capsys, "loss", path, "--objective", "ctc", "--format", "json", "--out-dir", tmp_path)
    rec = json.loads(out)
    assert code == EXIT_OK and rec["feasible"] is False and rec["status"] == "no valid path"
    code, _, err = run(capsys, "loss", path, "--objective", "ce", "--out-dir", tmp_path)
    assert code == EXIT_VALIDATION and "m == n" in err


def test_unnormalized_row_is_a_validation_error(capsys, tmp_path, thanks_file):
    doc = json.loads(thanks_file.read_text())
    doc["logprobs"][2][0] = -0.001
    thanks_file.write_text(json.dumps(doc))
    code, _, err = run(capsys, "loss", thanks_file, "--out-dir", tmp_path)
    assert code == EXIT_VALIDATION
    assert "logprobs[2]" in err


def test_broken_json_reports_line_and_column(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"vocab": [\n  "a",\n  ]\n}')
    code, _, err = run(capsys, "loss", path, "--out-dir", tmp_path)
    assert code == EXIT_VALIDATION and "line 3" in err
    code, _, err = run(capsys, "loss", tmp_path / "missing.json", "--out-dir", tmp_path)
    assert code == EXIT_VALIDATION


@pytest.mark.parametrize("name, make", [("rainy_day", rainy_day_instance), ("thank_you", thank_you_instance)])
def test_align_table_matches_golden_file(capsys, tmp_path, name, make):
    path = tmp_path / f"{name}.json"
    make().save(path)
    code, out, _ = run(capsys, "align", path, "--out-dir", tmp_path)
    assert code == EXIT_OK
    assert out == (GOLDEN / f"{name}_align.txt").read_text()
    assert out.isascii()


def test_align_marks_the_rainy_day_choices(capsys, tmp_path, rainy_file):
    _, out, _ = run(capsys, "align", rainy_file, "--out-dir", tmp_path)
    lines = out.splitlines()
    assert lines[1].split() == ["alignment", "1", "2", "4", "5", "5"]
    marked = [tok for line in lines if line.startswith("top") for tok in line.split("[")[1:]]
    marked = sorted(t.split()[0] for t in marked)
    assert marked == sorted(["it", "is", "<eps>", "rainy", "today", "<eos>"])
    assert sum(line.startswith("top") for line in lines) == 4
    assert lines[-1] == "trace: align align delimiter align align clone_prediction"


def test_align_on_a_trivial_instance_marks_the_diagonal(capsys, tmp_path):
    tokens = ("<eps>", "<eos>", "a", "b")
    logp = np.log(np.array([[0.05, 0.05, 0.85, 0.05], [0.05, 0.05, 0.05, 0.85], [0.05, 0.85, 0.05, 0.05]]))
    path = tmp_path / "diag.json"
    Instance(Vocab(tokens, 0, 1), TargetSeq((2, 3, 1)), LogProbMatrix(logp)).save(path)
    _, out, _ = run(capsys, "align", path, "--topk", "2", "--out-dir", tmp_path)
    lines = out.splitlines()
    assert lines[1].split() == ["alignment", "1", "2", "3"]
    assert lines[4].split() == ["top1", "[a", "0.85]", "[b", "0.85]", "[<eos>", "0.85]"]
    assert sum(line.startswith("top") for line in lines) == 2


def test_manifest_is_written_and_reproducible(capsys, tmp_path, thanks_file):
    out_dir = tmp_path / "run"
    run(capsys, "loss", thanks_file, "--out-dir", out_dir)
    first = (out_dir / "manifest.json").read_bytes()
    run(capsys, "loss", thanks_file, "--out-dir", out_dir)
    assert (out_dir / "manifest.json").read_bytes() == first
    manifest = json.loads(first)
    assert manifest["command"] == "loss" and "version" in manifest
    assert manifest["args"]["objective"] == "axe"


def test_csv_output(capsys, tmp_path, thanks_file):
    _, out, _ = run(capsys, "loss", thanks_file, "--format", "csv", "--out-dir", tmp_path)
    rows = list(csv.DictReader(out.splitlines()))
    assert len(rows) == 1 and rows[0]["trace"].startswith("delimiter")


def test_oracle_check(capsys, tmp_path):
    code, out, _ = run(capsys, "oracle-check", "--max-n", "3", "--max-m", "3", "--trials", "5",
                       "--format", "json", "--out-dir", tmp_path)
    rec = json.loads(out)
    assert code == EXIT_OK and rec["status"] == "pass" and rec["max_rel_dev"] < 1e-9
    assert rec["cells"] == 9 * 8
    code, _, err = run(capsys, "oracle-check", "--max-n", "9", "--max-m", "8", "--out-dir", tmp_path)
    assert code == EXIT_VALIDATION and "64" in err


def test_oracle_check_failure_exit_code(capsys, tmp_path, monkeypatch):
    from latalign import verify

    real = verify.latent_loss

    def off_by_a_bit(target, logprobs, cfg):
        res = real(target, logprobs, cfg)
        return type(res)(res.neg_log_loss * 1.01, res.feasible, res.n, res.normalized, res.best_path)

    monkeypatch.setattr(verify, "latent_loss", off_by_a_bit)
    code, out, err = run(capsys, "oracle-check", "--max-n", "2", "--max-m", "2", "--trials", "2", "--out-dir", tmp_path)
    assert code == EXIT_ACCEPTANCE and "fail" in out and "FAIL" in err


def test_train_and_eval(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"task": {"preset": "default", "n_train": 64, "n_valid": 16, "n_test": 16},
                               "train": {"objective": "axe", "epochs": 2}}))
    out_dir = tmp_path / "run"
    code, out, _ = run(capsys, "train", cfg, "--out-dir", out_dir, "--format", "json")
    assert code == EXIT_OK
    summary = json.loads(out)
    assert summary["objective"] == "axe" and summary["epochs_run"] == 2
    with (out_dir / "metrics.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["epoch", "split", "loss", "empty_rate", "exact_match", "trivial_rate", "degenerate_rate"]
    assert [r["split"] for r in rows] == ["train", "valid", "train", "valid", "test"]
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["train"]["objective"] == "axe" and manifest["task"]["n_train"] == 64

    code, out, _ = run(capsys, "eval", out_dir / "model.json", "--split", "valid", "--format", "json",
                       "--out-dir", tmp_path / "ev")
    assert code == EXIT_OK
    rec = json.loads(out)
    assert rec["examples"] == 16
    assert {"empty_rate", "exact_match", "trivial_rate", "degenerate_rate"} <= set(rec)
    assert (tmp_path / "ev" / "eval_valid.csv").exists()

    # --seed overrides the config seed and is recorded
    run(capsys, "train", cfg, "--seed", "9", "--out-dir", out_dir)
    assert json.loads((out_dir / "manifest.json").read_text())["train"]["seed"] == 9


def test_train_config_errors(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    for doc in ({"task": {"preset": "nope"}}, {"train": {"objective": "mse"}}, {"model": {}}, [1, 2]):
        cfg.write_text(json.dumps(doc))
        code, _, err = run(capsys, "train", cfg, "--out-dir", tmp_path)
        assert code == EXIT_VALIDATION and err.startswith("error:")


def test_numeric_abort_exit_code(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"task": {"n_train": 32, "n_valid": 8, "n_test": 8},
                               "train": {"objective": "axe", "lr": 1e200, "clip": 0, "epochs": 2}}))
    code, _, err = run(capsys, "train", cfg, "--out-dir", tmp_path)
    assert code == EXIT_NUMERIC and "numeric abort" in err


def test_bad_flags_exit_with_code_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["loss", "x.json", "--objective", "nope"])
    assert exc.value.code == 2
