"""Command-line entry point: ``latalign {loss,align,oracle-check,train,eval}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import OperatorKind, path_to_alignment
from .dp import Aggregation, DpConfig, cross_entropy, latent_loss
from .instances import Instance, InstanceError
from .oracle import MAX_CELLS, SizeGuardError
from .toy.model import ToyModel
from .toy.tasks import TaskSpec, gen_dataset, mean_target_length
from .toy.train import DivergenceError, Metrics, TrainConfig, evaluate, train
from .verify import oracle_check

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ACCEPTANCE = 3
EXIT_NUMERIC = 4


class ValidationError(Exception):
    pass


# -- output helpers ---------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if v == math.inf else "nan" if math.isnan(v) else f"{v:.9g}"
    return str(v)


def ascii_table(rows: list[list[str]]) -> str:
    """Left-aligned columns separated by two spaces; trailing blanks trimmed."""
    widths = [max(len(r[c]) for r in rows if c < len(r)) for c in range(max(map(len, rows)))]
    lines = ["  ".join(cell.ljust(widths[c]) for c, cell in enumerate(r)).rstrip() for r in rows]
    return "\n".join(lines)


def render(record: dict, fmt: str) -> str:
    """A flat record as JSON, a two-line CSV or a key/value table."""
    if fmt == "json":
        return json.dumps(record, indent=2, default=_jsonable)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(record), lineterminator="\n")
        writer.writeheader()
        writer.writerow({k: _fmt(v) if not isinstance(v, (list, dict)) else json.dumps(v) for k, v in record.items()})
        return buf.getvalue().rstrip("\n")
    return ascii_table([[k, _fmt(v) if not isinstance(v, list) else " ".join(map(_fmt, v))] for k, v in record.items()])


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _clean(v):
    # JSON has no inf/nan
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_clean(x) for x in v]
    return v


def write_manifest(out_dir: Path, args: argparse.Namespace, extra: dict | None = None) -> None:
    resolved = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {"tool": "latalign", "version": __version__, "command": args.command, "args": resolved}
    if extra:
        manifest.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n")


def write_metrics_csv(path: Path, rows: list[Metrics]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=Metrics.CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(v) for k, v in r.row().items()})


def _load_json(path: Path, what: str) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {what} {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _load_instance(path: Path) -> Instance:
    try:
        return Instance.load(path)
    except InstanceError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ValidationError(f"cannot read instance {path}: {exc.strerror}") from None


def _dp_config(args) -> DpConfig:
    preset = DpConfig.ctc if args.objective == "ctc" else DpConfig.axe
    cfg = preset(args.causal, normalize_by_target_len=not args.no_normalize)
    if args.aggregation:
        cfg = replace(cfg, aggregation=Aggregation(args.aggregation))
    return cfg


def _alignment_cells(path, n: int) -> list[str]:
    al = path_to_alignment(path)
    return [",".join(str(j) for j in sorted(al[i])) or "-" for i in range(1, n + 1)]


# -- subcommands ------------------------------------------------------------


def cmd_loss(args) -> int:
    inst = _load_instance(args.instance)
    target, logp = inst.target.ids, inst.logprobs.values
    blank = inst.vocab.tokens.index(inst.vocab.blank)
    record: dict = {"objective": args.objective, "n": inst.n, "m": inst.m}
    if args.objective == "ce":
        if inst.m != inst.n:
            raise ValidationError(f"cross entropy needs m == n, got n={inst.n} m={inst.m}")
        record["normalized"] = not args.no_normalize
        record["neg_log_loss"] = cross_entropy(target, logp, normalize=not args.no_normalize)
    else:
        cfg = replace(_dp_config(args), blank=blank)
        res = latent_loss(target, logp, cfg)
        record.update(
            aggregation=cfg.aggregation.value,
            causal=cfg.ops.causal,
            normalized=cfg.normalize_by_target_len,
            feasible=res.feasible,
            neg_log_loss=res.neg_log_loss,
        )
        if not res.feasible:
            record["status"] = "no valid path"
        if res.best_path is not None:
            record["trace"] = str(res.best_path)
            record["alignment"] = _alignment_cells(res.best_path, inst.n)
    print(render(record, args.format))
    write_manifest(args.out_dir, args, {"result": record})
    return EXIT_OK


def align_table(inst: Instance, path, topk: int) -> str:
    """Target/alignment rows, then the top-k tokens per prediction with chosen ones bracketed."""
    n, m = inst.n, inst.m
    toks = inst.vocab.tokens
    tgt = inst.vocab.decode(inst.target.ids)
    chosen: list[dict[int, None]] = [{} for _ in range(m + 1)]
    for step in path:
        if step.op is OperatorKind.DELIMITER:
            chosen[step.j][toks.index(inst.vocab.blank)] = None
        else:
            chosen[step.j][inst.target.ids[step.i - 1]] = None
    top = [["target"] + tgt, ["alignment"] + _alignment_cells(path, n)]
    probs = np.exp(inst.logprobs.values)
    bottom = [["prediction"] + [f"p{j}" for j in range(1, m + 1)]]
    ranked = [list(np.argsort(-probs[j - 1], kind="stable")) for j in range(1, m + 1)]
    for r in range(min(topk, len(toks))):
        row = [f"top{r + 1}"]
        for j in range(1, m + 1):
            v = int(ranked[j - 1][r])
            label = f"{toks[v]} {probs[j - 1, v]:.3g}"
            row.append(f"[{label}]" if v in chosen[j] else f" {label} ")
        bottom.append(row)
    emits = ["emits"] + ["/".join(toks[v] for v in chosen[j]) or "-" for j in range(1, m + 1)]
    bottom.append(emits)
    return "\n".join([ascii_table(top), "", ascii_table(bottom), "", f"trace: {path}"])


def cmd_align(args) -> int:
    if args.topk < 1:
        raise ValidationError("--topk must be positive")
    inst = _load_instance(args.instance)
    blank = inst.vocab.tokens.index(inst.vocab.blank)
    cfg = replace(_dp_config(args), aggregation=Aggregation.MAX, blank=blank)
    res = latent_loss(inst.target.ids, inst.logprobs.values, cfg)
    if not res.feasible:
        print("no valid path")
        write_manifest(args.out_dir, args, {"result": {"feasible": False}})
        return EXIT_OK
    record = {
        "neg_log_loss": res.neg_log_loss,
        "trace": str(res.best_path),
        "alignment": _alignment_cells(res.best_path, inst.n),
    }
    if args.format == "pretty":
        print(align_table(inst, res.best_path, args.topk))
    else:
        print(render(record, args.format))
    write_manifest(args.out_dir, args, {"result": record})
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    if min(args.max_n, args.max_m, args.trials) < 1:
        raise ValidationError("--max-n, --max-m and --trials must be positive")
    if args.max_n * args.max_m > MAX_CELLS:
        raise ValidationError(f"--max-n x --max-m must not exceed {MAX_CELLS}")
    report = oracle_check(args.max_n, args.max_m, args.trials, args.seed)
    record = {
        "status": "pass" if report.ok else "fail",
        "cells": report.cells,
        "instances": report.instances,
        "max_rel_dev": report.max_rel_dev,
        "failures": len(report.failures),
    }
    print(render(record, args.format))
    for line in report.failures[:20]:
        print(f"FAIL {line}", file=sys.stderr)
    write_manifest(args.out_dir, args, {"result": record})
    return EXIT_OK if report.ok else EXIT_ACCEPTANCE


def load_run_config(path: Path, seed: int | None) -> tuple[TaskSpec, TrainConfig]:
    data = _load_json(path, "config")
    if not isinstance(data, dict) or set(data) - {"task", "train"}:
        raise ValidationError(f"{path}: expected an object with keys 'task' and 'train'")
    try:
        task = TaskSpec.from_dict(data.get("task", {}))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: task: {exc}") from None
    try:
        train_data = dict(data.get("train", {}))
        if seed is not None:
            train_data["seed"] = seed
        cfg = TrainConfig.from_dict(train_data)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: train: {exc}") from None
    return task, cfg


def cmd_train(args) -> int:
    task, cfg = load_run_config(args.config, args.seed)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)

    def progress(tr, va):
        if args.verbose:
            print(f"epoch {tr.epoch:3d}  train {tr.loss:.4f}  valid {va.loss:.4f}", file=sys.stderr)

    try:
        result = train(cfg, task, progress)
    except DivergenceError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        write_manifest(out, args, {"task": task.to_dict(), "train": cfg.to_dict(), "status": "diverged"})
        return EXIT_NUMERIC
    splits = result.splits
    final_train = evaluate(result.model, splits.train, cfg.objective, len(result.history) // 2, "train", decode_outputs=False)
    test = evaluate(result.model, splits.test, cfg.objective, final_train.epoch, "test")
    rows = result.history + [test]
    write_metrics_csv(out / "metrics.csv", rows)

    model_doc = result.model.to_dict()
    model_doc["meta"] = {"task": task.to_dict(), "train": cfg.to_dict()}
    (out / "model.json").write_text(json.dumps(model_doc))

    nbar = mean_target_length(splits.train)
    summary = {
        "objective": cfg.objective.value,
        "epochs_run": final_train.epoch,
        "mean_target_len": nbar,
        "copy_floor": 2 * math.log(2) / nbar,
        "train_loss": final_train.loss,
        "train_trivial_rate": final_train.trivial_rate,
        "train_degenerate_rate": final_train.degenerate_rate,
        "test_loss": test.loss,
        "test_empty_rate": test.empty_rate,
        "test_exact_match": test.exact_match,
        "skipped_examples": result.skipped,
    }
    print(render(summary, args.format))
    write_manifest(
        out, args,
        {"task": task.to_dict(), "train": cfg.to_dict(), "summary": summary,
         "outputs": ["metrics.csv", "model.json"]},
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    doc = _load_json(args.model, "model")
    try:
        model = ToyModel.from_dict(doc)
        meta = doc.get("meta") or {}
        task = TaskSpec.from_dict(meta["task"]) if "task" in meta else None
        cfg = TrainConfig.from_dict(meta["train"]) if "train" in meta else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{args.model}: {exc}") from None
    if args.config is not None:
        task, cfg = load_run_config(args.config, None)
    if task is None or cfg is None:
        raise ValidationError("model file has no task metadata; pass --config")
    if task.vocab_size != model.vocab_size:
        raise ValidationError(f"task vocabulary {task.vocab_size} != model vocabulary {model.vocab_size}")
    examples = getattr(gen_dataset(task), args.split)
    m = evaluate(model, examples, cfg.objective, 0, args.split, args.decode, args.beam)
    record = {
        "split": args.split,
        "objective": cfg.objective.value,
        "examples": len(examples),
        "loss": m.loss,
        "empty_rate": m.empty_rate,
        "exact_match": m.exact_match,
    }
    if cfg.objective.uses_max:
        record["trivial_rate"] = m.trivial_rate
        record["degenerate_rate"] = m.degenerate_rate
        record["other_rate"] = 1.0 - m.trivial_rate - m.degenerate_rate
    print(render(record, args.format))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(args.out_dir / f"eval_{args.split}.csv", [m])
    write_manifest(args.out_dir, args, {"task": task.to_dict(), "train": cfg.to_dict(), "result": record})
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (oracle-check default 0; train overrides the config seed)")
    common.add_argument("--out-dir", type=Path, default=Path("runs/latest"), help="directory for the manifest and outputs")
    common.add_argument("--format", choices=("json", "csv", "pretty"), default="pretty", help="stdout format")

    parser = argparse.ArgumentParser(prog="latalign", description="Monotonic latent alignment losses and a toy teacher-forced harness.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def objective_flags(p, choices, default):
        p.add_argument("instance", type=Path, help="instance JSON file")
        p.add_argument("--objective", choices=choices, default=default, help="operator preset (ce: plain cross entropy reference)")
        p.add_argument("--aggregation", choices=("sum", "max"), default=None, help="override the preset's aggregation")
        p.add_argument("--causal", action="store_true", help="only let p_j emit target tokens y_i with i >= j")
        p.add_argument("--no-normalize", action="store_true", help="report the raw negative log-likelihood")

    p = sub.add_parser("loss", parents=[common], help="compute a loss for an instance file")
    objective_flags(p, ("ctc", "axe", "ce"), "axe")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("align", parents=[common], help="show the best alignment of an instance")
    objective_flags(p, ("ctc", "axe"), "axe")
    p.add_argument("--topk", type=int, default=4, help="prediction rows to show per position")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("oracle-check", parents=[common], help="compare dynamic programs with brute-force enumeration")
    p.add_argument("--max-n", type=int, default=5)
    p.add_argument("--max-m", type=int, default=5)
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("train", parents=[common], help="train the toy model from a JSON config")
    p.add_argument("config", type=Path, help='JSON file {"task": {...}, "train": {...}}')
    p.add_argument("-v", "--verbose", action="store_true", help="print per-epoch losses to stderr")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a saved model on a dataset split")
    p.add_argument("model", type=Path, help="model.json written by train")
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--config", type=Path, default=None, help="use this run config instead of the model's metadata")
    p.add_argument("--decode", choices=("greedy", "beam"), default="greedy")
    p.add_argument("--beam", type=int, default=5)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "oracle-check" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except (ValidationError, SizeGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DivergenceError, FloatingPointError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
