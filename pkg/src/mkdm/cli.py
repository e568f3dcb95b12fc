"""Command-line pipeline: generate data, train teachers, label, distill,
two-stage train, sweep, and benchmark.

Every artifact-producing command writes a manifest.json recording the
resolved config, input/output content hashes, and a deterministic run id,
so any results row can be traced back to exact inputs. Exit codes: 0 on
success, 2 for usage/config/input problems, 3 for runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .checkpoint import load_model, save_model
from .data import (
    SyntheticSpec,
    attach_soft_labels,
    encode_dataset,
    generate_synthetic,
    load_tsv,
    save_tsv,
    split_dataset,
    strip_labels,
)
from .encoder import EncoderConfig
from .errors import CheckpointError, ConfigError, ContractError, DataError, MkdmError
from .metrics import EvalReport, accuracy, append_results_csv, auc, qps_benchmark, results_csv_row
from .models import StudentModel
from .teachers import (
    TeacherConfig,
    build_cache,
    default_zoo,
    load_cache,
    predict_soft_labels,
    save_cache,
    train_teacher,
    validate_zoo,
)
from .text import Vocabulary
from .trainer import TrainConfig, evaluate_student, finetune_stage2, train_student


# ---------------------------------------------------------------------------
# manifests and config plumbing
# ---------------------------------------------------------------------------


def _sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_json(path, what):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} file {path} is not valid JSON: {e}") from e


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_history(path, history):
    with open(path, "w", encoding="utf-8") as f:
        for record in history:
            f.write(json.dumps(record, sort_keys=True) + "\n")


def make_run_id(command, config, input_hashes):
    payload = json.dumps(
        {"command": command, "config": config, "inputs": sorted(input_hashes.values())},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def write_manifest(out_dir, command, config, inputs, outputs, started):
    input_hashes = {p: _sha256_file(p) for p in inputs}
    run_id = make_run_id(command, config, input_hashes)
    manifest = {
        "run_id": run_id,
        "command": command,
        "config": config,
        "inputs": input_hashes,
        "outputs": {p: _sha256_file(os.path.join(out_dir, p)) for p in outputs},
        "wall_time_seconds": time.perf_counter() - started,
        "version": __version__,
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return run_id


def _parse_encoder(d):
    try:
        return EncoderConfig(**d)
    except TypeError as e:
        raise ConfigError(f"bad encoder config: {e}") from e


def _parse_train_config(d, **overrides):
    d = dict(d)
    if "encoder" in d:
        d["encoder"] = _parse_encoder(d["encoder"])
    d.update({k: v for k, v in overrides.items() if v is not None})
    if "layer_map" in d and d["layer_map"] is not None:
        d["layer_map"] = tuple(tuple(pair) for pair in d["layer_map"])
    try:
        return TrainConfig(**d)
    except TypeError as e:
        raise ConfigError(f"bad train config: {e}") from e


def _parse_zoo(d):
    teachers = []
    for entry in d.get("teachers", []):
        entry = dict(entry)
        if "encoder" in entry:
            entry["encoder"] = _parse_encoder(entry["encoder"])
        try:
            teachers.append(TeacherConfig(**entry))
        except TypeError as e:
            raise ConfigError(f"bad teacher config: {e}") from e
    if not teachers:
        raise ConfigError("zoo config declares no teachers")
    return validate_zoo(teachers, d.get("student_layers"))


def _config_dict(config):
    return json.loads(json.dumps(dataclasses.asdict(config), sort_keys=True))


def _load_split(data_dir, name):
    path = os.path.join(data_dir, f"{name}.tsv")
    if not os.path.exists(path):
        raise DataError(f"missing {name}.tsv in {data_dir}")
    return load_tsv(path), path


def _load_vocab(data_dir):
    path = os.path.join(data_dir, "vocab.txt")
    if not os.path.exists(path):
        raise DataError(f"missing vocab.txt in {data_dir}")
    return Vocabulary.load(path), path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(args):
    started = time.perf_counter()
    spec_dict = _load_json(args.spec, "spec") if args.spec else {}
    try:
        spec = SyntheticSpec(**spec_dict)
    except TypeError as e:
        raise ConfigError(f"bad synthetic spec: {e}") from e
    examples = generate_synthetic(spec)
    train, val, test = split_dataset(examples, (0.8, 0.1, 0.1), seed=spec.seed)
    os.makedirs(args.out, exist_ok=True)
    corpus = [f"{ex.question} {ex.passage}" for ex in examples]
    vocab = Vocabulary.build(corpus, target_size=spec.vocab_size + 64)
    outputs = ["train.tsv", "val.tsv", "test.tsv", "vocab.txt"]
    save_tsv(train, os.path.join(args.out, "train.tsv"))
    save_tsv(val, os.path.join(args.out, "val.tsv"))
    save_tsv(test, os.path.join(args.out, "test.tsv"))
    vocab.save(os.path.join(args.out, "vocab.txt"))
    if args.unlabeled > 0:
        unlabeled_spec = dataclasses.replace(spec, size=args.unlabeled,
                                             seed=spec.seed + 1, noise=0.0)
        unlabeled = [dataclasses.replace(ex, id="u" + ex.id)
                     for ex in strip_labels(generate_synthetic(unlabeled_spec))]
        save_tsv(unlabeled, os.path.join(args.out, "unlabeled.tsv"))
        outputs.append("unlabeled.tsv")
    config = dataclasses.asdict(spec)
    config["unlabeled"] = args.unlabeled
    inputs = [args.spec] if args.spec else []
    write_manifest(args.out, "gen-data", config, inputs, outputs, started)
    return 0


def cmd_train_teachers(args):
    started = time.perf_counter()
    if args.zoo:
        zoo = _parse_zoo(_load_json(args.zoo, "zoo"))
    else:
        zoo = default_zoo()
    train_ex, train_path = _load_split(args.data, "train")
    val_ex, val_path = _load_split(args.data, "val")
    vocab, vocab_path = _load_vocab(args.data)
    encoded = {}

    def encode_for(max_len):
        if max_len not in encoded:
            encoded[max_len] = (encode_dataset(train_ex, vocab, max_len=max_len),
                                encode_dataset(val_ex, vocab, max_len=max_len))
        return encoded[max_len]

    os.makedirs(args.out, exist_ok=True)
    outputs = []
    failures = []
    for cfg in zoo:
        try:
            train_data, val_data = encode_for(cfg.encoder.max_len)
            model, history = train_teacher(train_data, val_data, cfg)
            save_model(model, os.path.join(args.out, f"{cfg.id}.ckpt"), teacher_id=cfg.id)
            _write_history(os.path.join(args.out, f"{cfg.id}.history.jsonl"), history)
            scores = predict_soft_labels(model, val_data)
            report = EvalReport(acc=accuracy(scores, val_data["gold"]),
                                auc=auc(scores, val_data["gold"]),
                                n_examples=len(val_data["gold"]))
            _write_json(os.path.join(args.out, f"{cfg.id}.report.json"), report.to_dict())
            outputs.extend([f"{cfg.id}.ckpt", f"{cfg.id}.history.jsonl", f"{cfg.id}.report.json"])
        except Exception as e:  # noqa: BLE001 - keep training the rest of the zoo
            failures.append((cfg.id, e))
            print(f"teacher {cfg.id} failed: {e}", file=sys.stderr)
    config = {"zoo": [_config_dict(c) for c in zoo]}
    write_manifest(args.out, "train-teachers", config,
                   [train_path, val_path, vocab_path], outputs, started)
    if failures:
        names = ", ".join(tid for tid, _ in failures)
        print(f"failed teachers: {names}", file=sys.stderr)
        return 3
    return 0


def _load_teachers(teachers_dir):
    paths = sorted(
        os.path.join(teachers_dir, f)
        for f in os.listdir(teachers_dir) if f.endswith(".ckpt")
    )
    if not paths:
        raise DataError(f"no teacher checkpoints (*.ckpt) in {teachers_dir}")
    loaded = []
    for path in paths:
        model, config = load_model(path)
        tid = config.get("teacher_id", os.path.splitext(os.path.basename(path))[0])
        loaded.append((tid, model, path))
    loaded.sort(key=lambda item: item[0])
    return loaded


def cmd_label(args):
    started = time.perf_counter()
    teachers = _load_teachers(args.teachers)
    examples, data_path = _load_split(args.data, args.split)
    vocab, vocab_path = _load_vocab(args.data)
    max_len = teachers[0][1].config.max_len
    encoded = encode_dataset(examples, vocab, max_len=max_len)
    cache = build_cache([(tid, model) for tid, model, _ in teachers], encoded)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    save_cache(cache, args.out)
    config = {"split": args.split, "teachers": [tid for tid, _, _ in teachers]}
    inputs = [data_path, vocab_path] + [p for _, _, p in teachers]
    input_hashes = {p: _sha256_file(p) for p in inputs}
    run_id = make_run_id("label", config, input_hashes)
    _write_json(args.out + ".manifest.json", {
        "run_id": run_id, "command": "label", "config": config,
        "inputs": input_hashes, "outputs": {args.out: _sha256_file(args.out)},
        "wall_time_seconds": time.perf_counter() - started, "version": __version__,
    })
    return 0


def _prepare_student_data(args, config, labeled_split="train"):
    examples, train_path = _load_split(args.data, labeled_split)
    val_ex, val_path = _load_split(args.data, "val")
    test_ex, test_path = _load_split(args.data, "test")
    vocab, vocab_path = _load_vocab(args.data)
    inputs = [train_path, val_path, test_path, vocab_path]
    if config.mode != "gold_only":
        if not args.cache or not os.path.exists(args.cache):
            raise ConfigError(
                f"{config.mode} mode needs --cache pointing at a soft-label file"
            )
        cache = load_cache(args.cache)
        if config.mode == "single_student":
            if not config.teacher_id:
                raise ConfigError("single_student mode needs teacher_id")
            cache = cache.column(config.teacher_id)
        examples = attach_soft_labels(examples, cache)
        inputs.append(args.cache)
    max_len = config.encoder.max_len
    train_data = encode_dataset(examples, vocab, max_len=max_len)
    val_data = encode_dataset(val_ex, vocab, max_len=max_len)
    test_data = encode_dataset(test_ex, vocab, max_len=max_len)
    return train_data, val_data, test_data, inputs


_CLI_MODES = {"mkdm": "mkdm", "single": "single_student", "gold-only": "gold_only"}


def _finish_student_run(args, config, model, history, extras, test_data, started,
                        inputs, command):
    os.makedirs(args.out, exist_ok=True)
    save_model(model, os.path.join(args.out, "student.ckpt"))
    _write_history(os.path.join(args.out, "history.jsonl"), history)
    report = None
    if test_data is not None and not (test_data["gold"] < 0).any():
        report = evaluate_student(model, test_data,
                                  include_golden=config.resolve_include_golden(),
                                  include_soft=config.resolve_include_soft())
        _write_json(os.path.join(args.out, "report.json"),
                    {"test": report.to_dict(), "extras": extras})
    else:
        _write_json(os.path.join(args.out, "report.json"), {"extras": extras})
    outputs = ["student.ckpt", "history.jsonl", "report.json"]
    config_dict = _config_dict(config)
    run_id = write_manifest(args.out, command, config_dict, inputs, outputs, started)
    if report is not None:
        append_results_csv(
            os.path.join(args.out, "results.csv"),
            [results_csv_row(run_id, config.encoder.layers, config.alpha,
                             config.mode, report)],
        )
    return 0


def cmd_distill(args):
    started = time.perf_counter()
    base = _load_json(args.config, "train config") if args.config else {}
    mode = _CLI_MODES.get(args.mode, args.mode) if args.mode else None
    config = _parse_train_config(base, mode=mode, alpha=args.alpha, seed=args.seed,
                                 teacher_id=args.teacher)
    train_data, val_data, test_data, inputs = _prepare_student_data(args, config)
    model, history, extras = train_student(train_data, val_data, config)
    return _finish_student_run(args, config, model, history, extras, test_data,
                               started, inputs, "distill")


def cmd_pretrain(args):
    started = time.perf_counter()
    base = _load_json(args.config, "train config") if args.config else {}
    config = _parse_train_config(base, mode="soft_only_pretrain", seed=args.seed)
    examples, data_path = _load_split(args.data, "unlabeled")
    vocab, vocab_path = _load_vocab(args.data)
    if not args.cache or not os.path.exists(args.cache):
        raise ConfigError("pretraining needs --cache with soft labels for the unlabeled set")
    cache = load_cache(args.cache)
    examples = attach_soft_labels(examples, cache)
    train_data = encode_dataset(examples, vocab, max_len=config.encoder.max_len)
    val_data = None
    inputs = [data_path, vocab_path, args.cache]
    if os.path.exists(os.path.join(args.data, "val.tsv")):
        val_ex, val_path = _load_split(args.data, "val")
        val_data = encode_dataset(val_ex, vocab, max_len=config.encoder.max_len)
        inputs.append(val_path)
    model, history, extras = train_student(train_data, val_data, config)
    return _finish_student_run(args, config, model, history, extras, None,
                               started, inputs, "pretrain")


def cmd_finetune(args):
    started = time.perf_counter()
    base = _load_json(args.config, "train config") if args.config else {}
    config = _parse_train_config(base, mode="mkdm", alpha=args.alpha, seed=args.seed)
    if not os.path.exists(args.init):
        raise ConfigError(f"stage-1 checkpoint {args.init} does not exist")
    train_data, val_data, test_data, inputs = _prepare_student_data(args, config)
    inputs.append(args.init)
    model, history, extras = finetune_stage2(train_data, val_data, config, args.init)
    return _finish_student_run(args, config, model, history, extras, test_data,
                               started, inputs, "finetune")


def _parse_axis(text):
    if ":" not in text:
        raise ConfigError(f"axis must look like layers:1,3,5 or alpha:0.1,0.9, got {text!r}")
    name, _, values = text.partition(":")
    name = name.strip()
    if name == "layers":
        parsed = [int(v) for v in values.split(",") if v.strip()]
    elif name == "alpha":
        parsed = [float(v) for v in values.split(",") if v.strip()]
    else:
        raise ConfigError(f"unknown sweep axis {name!r} (use layers or alpha)")
    if not parsed:
        raise ConfigError(f"axis {name} lists no values")
    return name, parsed


def cmd_sweep(args):
    started = time.perf_counter()
    axis, values = _parse_axis(args.axis)
    base = _load_json(args.config, "train config") if args.config else {}
    config = _parse_train_config(base)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [config.seed]
    train_data, val_data, test_data, inputs = _prepare_student_data(args, config)
    os.makedirs(args.out, exist_ok=True)
    config_dict = _config_dict(config)
    config_dict.update({"axis": axis, "values": values, "seeds": seeds,
                        "bench": bool(args.bench)})
    input_hashes = {p: _sha256_file(p) for p in inputs}
    run_id = make_run_id("sweep", config_dict, input_hashes)
    rows = []
    for value in values:
        accs, aucs = [], []
        bench_model = None
        cfg = config
        for seed in seeds:
            if axis == "layers":
                cfg = dataclasses.replace(
                    config, seed=seed,
                    encoder=dataclasses.replace(config.encoder, layers=value))
            else:
                cfg = dataclasses.replace(config, seed=seed, alpha=value)
            model, history, _ = train_student(train_data, val_data, cfg)
            report = evaluate_student(model, val_data,
                                      include_golden=cfg.resolve_include_golden(),
                                      include_soft=cfg.resolve_include_soft())
            accs.append(report.acc)
            aucs.append(report.auc)
            bench_model = model
        qps = ""
        if args.bench:
            result = _bench_model(bench_model, val_data,
                                  include_golden=cfg.resolve_include_golden(),
                                  min_duration=args.bench_seconds)
            qps = f"{result.mean:.6g}"
        layers = value if axis == "layers" else config.encoder.layers
        alpha = value if axis == "alpha" else config.alpha
        rows.append(f"{run_id},{layers},{alpha},{config.mode},"
                    f"{np.mean(accs):.6f},{np.mean(aucs):.6f},{qps}")
    append_results_csv(os.path.join(args.out, "results.csv"), rows)
    manifest_outputs = ["results.csv"]
    write_manifest(args.out, "sweep", config_dict, inputs, manifest_outputs, started)
    return 0


def _bench_model(model, encoded, include_golden=True, batch_size=1,
                 min_duration=0.5, warmup=10, reps=3):
    tok, seg, mask = encoded["token_ids"], encoded["segment_ids"], encoded["mask"]
    n = len(tok)
    state = {"i": 0}

    def step():
        i = state["i"]
        sl = slice(i, i + batch_size)
        if isinstance(model, StudentModel):
            model.predict(tok[sl], seg[sl], mask[sl], include_golden=include_golden)
        else:
            model.predict(tok[sl], seg[sl], mask[sl])
        state["i"] = (i + batch_size) % max(n - batch_size, 1)

    return qps_benchmark(step, n, batch_size=batch_size, warmup_batches=warmup,
                         min_duration_seconds=min_duration, repetitions=reps)


def cmd_bench(args):
    if not os.path.exists(args.model):
        raise ConfigError(f"model checkpoint {args.model} does not exist")
    model, config = load_model(args.model)
    examples, _ = _load_split(args.data, args.split)
    vocab, _ = _load_vocab(args.data)
    encoded = encode_dataset(examples, vocab, max_len=model.config.max_len)
    result = _bench_model(model, encoded, batch_size=args.batch_size,
                          min_duration=args.bench_seconds)
    out = {
        "model": args.model,
        "kind": config.get("kind"),
        "layers": model.config.layers,
        "batch_size": result.batch_size,
        "qps_mean": result.mean,
        "qps_std": result.std,
        "repetitions": result.repetitions,
    }
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_kernel_bench(args):
    from . import kernel_bench

    report = kernel_bench.run(batch=args.batch, length=args.length,
                              hidden=args.hidden, repeats=args.repeats)
    print(kernel_bench.format_report(report))
    return 0


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mkdm",
        description="Multi-task knowledge distillation for QA relevance, desk scale.",
    )
    parser.add_argument("--version", action="version", version=f"mkdm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--spec", help="JSON file of SyntheticSpec overrides")
    p.add_argument("--out", required=True)
    p.add_argument("--unlabeled", type=int, default=0,
                   help="also emit this many unlabeled pairs")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-teachers", help="train the teacher zoo")
    p.add_argument("--data", required=True)
    p.add_argument("--zoo", help="JSON zoo config (default: built-in 3-teacher zoo)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_teachers)

    p = sub.add_parser("label", help="cache teacher scores for a dataset split")
    p.add_argument("--teachers", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train",
                   choices=("train", "val", "test", "unlabeled"))
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("distill", help="train a student")
    p.add_argument("--data", required=True)
    p.add_argument("--cache")
    p.add_argument("--config", help="JSON TrainConfig overrides")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=tuple(_CLI_MODES))
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--teacher", help="teacher id for single mode")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("pretrain", help="stage 1: soft-label-only pretraining")
    p.add_argument("--data", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="stage 2: joint training from a stage-1 checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--config")
    p.add_argument("--init", required=True, help="stage-1 checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("sweep", help="sweep layers or alpha, one CSV row per setting")
    p.add_argument("--axis", required=True, help="layers:1,3,5,7,9 or alpha:0.1,0.9")
    p.add_argument("--data", required=True)
    p.add_argument("--cache")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", help="comma-separated seeds to average over")
    p.add_argument("--bench", action="store_true", help="also measure QPS per setting")
    p.add_argument("--bench-seconds", type=float, default=0.5)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="measure a checkpoint's QPS")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test",
                   choices=("train", "val", "test", "unlabeled"))
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--bench-seconds", type=float, default=0.5)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("kernel-bench", help="compare native and numpy kernel backends")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--length", type=int, default=64)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--repeats", type=int, default=50)
    p.set_defaults(func=cmd_kernel_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError, DataError, CheckpointError,
            FileNotFoundError, NotADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except MkdmError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
