"""Command-line entry point.

Subcommands: validate, synth, train, pretrain, eval, ablate, stats, report.

Configs are flat key=value files; --set key=value flags override them after
parsing. Every run writes the fully resolved configuration to
<out>/config.resolved so the run can be reproduced from its own artifacts.
The default output root is $INON_OUT, falling back to ./runs.

Exit codes: 0 success, 1 dataset validation failure, 2 configuration error,
3 data error (missing or malformed files), 4 numeric failure in training.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .data import (
    DatasetValidationError,
    ManifestError,
    language_stats,
    load_manifest,
    parse_manifest,
    validate_folds,
)
from .embeddings import LanguageDataError, StoreFormatError
from .harness import (
    ExperimentConfig,
    NumericError,
    ProtocolError,
    RunReport,
    SeedTrace,
    ablation_rows,
    baseline_majority_class,
    baseline_random_report,
    evaluate,
    load_task_data,
    model_spec,
    plot_curves,
    pretrain_auxiliary,
    render_table,
    run_protocol,
    train_run,
)
from .models import AblationMask, ModelSpec, load_model, save_model
from .scene import CaptureFormatError
from .synth import SynthConfig, generate_dataset

log = logging.getLogger("inon")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DATA_ERRORS = (
    ManifestError,
    StoreFormatError,
    LanguageDataError,
    CaptureFormatError,
    ProtocolError,
    FileNotFoundError,
    IsADirectoryError,
)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# key=value configs
# ---------------------------------------------------------------------------

def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_seeds(s: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in s.split(",") if x)
    except ValueError:
        raise ConfigError(f"seeds must be comma-separated integers, got {s!r}")


def parse_mask(s: str) -> AblationMask:
    parts = set(s.split("+"))
    bad = parts - {"ego", "lang", "vis"}
    if bad or not parts:
        raise ConfigError(f"mask tokens must be ego/lang/vis joined by '+', got {s!r}")
    try:
        return AblationMask(ego="ego" in parts, language="lang" in parts, vision="vis" in parts)
    except ValueError as e:
        raise ConfigError(str(e))


TRAIN_SCHEMA = {
    "manifest": str,
    "store": str,
    "relation": str,
    "kind": str,
    "mask": parse_mask,
    "pretrain": _parse_bool,
    "epochs": int,
    "seeds": _parse_seeds,
    "lr": float,
    "batch_size": int,
    "base_filters": int,
    "hidden": int,
    "dropout_p": float,
}

SYNTH_SCHEMA = {
    "seed": int,
    "n_objects": int,
    "container_fraction": float,
    "relation": str,
    "difficulty": str,
    "image_noise_sigma": float,
    "d_v": int,
    "d_l": int,
}


def read_kv_file(path: str) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}")
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def resolve_config(schema: dict, file_path: str | None, overrides: list[str],
                   defaults: dict) -> dict:
    raw = dict(defaults)
    if file_path:
        raw.update(read_kv_file(file_path))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    resolved = {}
    for k, v in raw.items():
        if k not in schema:
            raise ConfigError(f"unknown config key {k!r} (valid: {', '.join(sorted(schema))})")
        if isinstance(v, str):
            caster = schema[k]
            try:
                resolved[k] = caster(v)
            except ConfigError:
                raise
            except (TypeError, ValueError):
                raise ConfigError(f"config key {k!r}: cannot parse {v!r}")
        else:
            resolved[k] = v
    return resolved


def _stringify(v) -> str:
    if isinstance(v, AblationMask):
        return v.label()
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def write_resolved(out_dir: str, resolved: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    lines = [f"{k}={_stringify(resolved[k])}" for k in sorted(resolved)]
    with open(os.path.join(out_dir, "config.resolved"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def default_out(subcommand: str) -> str:
    root = os.environ.get("INON_OUT", "runs")
    return os.path.join(root, subcommand)


def experiment_config(resolved: dict) -> ExperimentConfig:
    need = [k for k in ("manifest", "store", "relation") if k not in resolved]
    if need:
        raise ConfigError(f"missing required config keys: {', '.join(need)}")
    kwargs = dict(resolved)
    manifest = kwargs.pop("manifest")
    store = kwargs.pop("store")
    relation = kwargs.pop("relation")
    try:
        return ExperimentConfig(manifest, store, relation, **kwargs)
    except ValueError as e:
        raise ConfigError(str(e))


def experiment_echo(config: ExperimentConfig) -> dict:
    """Every effective key, defaults included, so config.resolved is itself
    a valid --config file for an identical rerun."""
    return {
        "manifest": config.manifest_path,
        "store": config.store_path,
        "relation": config.relation,
        "kind": config.kind,
        "mask": config.mask,
        "pretrain": config.pretrain,
        "epochs": config.epochs,
        "seeds": config.seeds,
        "lr": config.lr,
        "batch_size": config.batch_size,
        "base_filters": config.base_filters,
        "hidden": config.hidden,
        "dropout_p": config.dropout_p,
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    catalog, pairs = load_manifest(args.manifest, require_trials=args.trials)
    report = validate_folds(catalog, pairs)
    lines = []
    for fold in ("train", "dev", "test"):
        lines.append(
            f"{fold}: objects={report.object_counts[fold]} "
            f"containers={report.container_counts[fold]} "
            f"robot(in={report.robot_pairs(fold, 'in')}, on={report.robot_pairs(fold, 'on')}) "
            f"all(in={report.all_pairs(fold, 'in')}, on={report.all_pairs(fold, 'on')})"
        )
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    out = args.out or default_out("validate")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "validation.txt"), "w", encoding="utf-8") as f:
        f.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    resolved = resolve_config(SYNTH_SCHEMA, args.config, args.set, defaults={})
    kwargs = dict(resolved)
    dims = (kwargs.pop("d_v", 16), kwargs.pop("d_l", 8))
    try:
        cfg = SynthConfig(embedding_dims=dims, **kwargs)
    except ValueError as e:
        raise ConfigError(str(e))
    out = args.out or default_out("synth")
    ds = generate_dataset(cfg, out)
    write_resolved(out, {
        "seed": cfg.seed,
        "n_objects": cfg.n_objects,
        "container_fraction": cfg.container_fraction,
        "relation": cfg.relation,
        "difficulty": cfg.difficulty,
        "image_noise_sigma": cfg.image_noise_sigma,
        "d_v": cfg.embedding_dims[0],
        "d_l": cfg.embedding_dims[1],
    })
    log.info("dataset written to %s", out)
    sys.stdout.write(f"manifest: {ds.manifest_path}\nstore: {ds.store_path}\n")
    return EXIT_OK


def _load_experiment(args) -> ExperimentConfig:
    resolved = resolve_config(TRAIN_SCHEMA, args.config, args.set, defaults={})
    return experiment_config(resolved)


def cmd_train(args) -> int:
    config = _load_experiment(args)
    out = args.out or default_out("train")
    os.makedirs(out, exist_ok=True)
    write_resolved(out, experiment_echo(config))
    data = load_task_data(config.manifest_path, config.store_path, config.relation)
    pretrained = None
    if config.pretrain:
        pretrained, pre_meta = pretrain_auxiliary(config, data)
        log.info("pretrained: best dev all-pairs %.3f at epoch %d",
                 pre_meta["dev_acc"], pre_meta["epoch"])
    traces = []
    for seed in config.seeds:
        params, metrics = train_run(config, seed, data, pretrained)
        traces.append(SeedTrace(seed, tuple(metrics["train"]), tuple(metrics["dev"]),
                                tuple(metrics["test"])))
        spec = model_spec(config, data, seed)
        save_model(os.path.join(out, f"model_seed{seed}.tnsr"), spec, params,
                   {"seed": str(seed), "mask": config.mask.label(),
                    "pretrain": str(config.pretrain).lower()})
        log.info("seed %d: max dev %.3f max test %.3f", seed,
                 max(metrics["dev"]), max(metrics["test"]))
    report = RunReport(config.relation, config.kind, config.mask.label(),
                       config.pretrain, config.epochs, tuple(traces))
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as f:
        f.write(report.to_json())
    table = render_table([(f"{config.kind}", report)])
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as f:
        f.write(table)
    plot_curves(report, os.path.join(out, "curves.png"))
    sys.stdout.write(table)
    return EXIT_OK


def cmd_pretrain(args) -> int:
    config = _load_experiment(args)
    out = args.out or default_out("pretrain")
    os.makedirs(out, exist_ok=True)
    write_resolved(out, experiment_echo(config))
    data = load_task_data(config.manifest_path, config.store_path, config.relation,
                          require_trials=False)
    params, meta = pretrain_auxiliary(config, data)
    spec = replace(model_spec(config, data, config.seeds[0]), kind="obj_only")
    path = os.path.join(out, "pretrained.tnsr")
    save_model(path, spec, params, {"dev_acc": repr(meta["dev_acc"]),
                                    "best_epoch": str(meta["epoch"])})
    payload = {"dev_acc": meta["dev_acc"], "best_epoch": meta["epoch"], "path": path}
    with open(os.path.join(out, "pretrain.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True)
    sys.stdout.write(f"best dev all-pairs accuracy {meta['dev_acc']:.4f} "
                     f"(epoch {meta['epoch']})\n")
    return EXIT_OK


def _spec_from_meta(meta: dict) -> ModelSpec:
    try:
        return ModelSpec(
            kind=meta["kind"],
            relation=meta["relation"],
            base_filters=int(meta["base_filters"]),
            hidden=int(meta["hidden"]),
            dropout_p=float(meta["dropout_p"]),
            seed=int(meta.get("seed", "0")),
            vision_dim=int(meta["vision_dim"]),
            language_dim=int(meta["language_dim"]),
        )
    except KeyError as e:
        raise ConfigError(f"checkpoint metadata is missing {e.args[0]!r}")


def cmd_eval(args) -> int:
    params, meta = load_model(args.model)
    spec = _spec_from_meta(meta)
    mask = parse_mask(args.mask) if args.mask else parse_mask(meta.get("mask", "ego+lang+vis"))
    data = load_task_data(args.manifest, args.store, spec.relation,
                          require_trials=args.mode == "robot")
    acc = evaluate(spec, params, data, args.fold, args.mode, mask)
    result = {"accuracy": acc, "fold": args.fold, "mode": args.mode,
              "kind": spec.kind, "mask": mask.label()}
    if args.baselines:
        train_pairs = data.robot["train"] if args.mode == "robot" else data.allpairs["train"]
        eval_pairs = data.robot[args.fold] if args.mode == "robot" else data.allpairs[args.fold]
        mc = baseline_majority_class(train_pairs, eval_pairs)
        rnd_mean, rnd_std = baseline_random_report(eval_pairs, range(10))
        result["baseline_mc"] = mc
        result["baseline_random"] = [rnd_mean, rnd_std]
    out = args.out or default_out("eval")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "eval.json"), "w", encoding="utf-8") as f:
        json.dump(result, f, sort_keys=True)
    sys.stdout.write(f"{args.fold} {args.mode} accuracy: {acc:.4f}\n")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _load_experiment(args)
    out = args.out or default_out("ablate")
    os.makedirs(out, exist_ok=True)
    write_resolved(out, experiment_echo(config))
    data = load_task_data(config.manifest_path, config.store_path, config.relation)
    rows = []
    for name, mask, pre in ablation_rows():
        kind = "ego_obj" if mask.ego else "obj_only"
        row_cfg = replace(config, kind=kind, mask=mask, pretrain=pre)
        report = run_protocol(row_cfg, data)
        rows.append((name, report))
        with open(os.path.join(out, f"row_{name.replace('+', '_')}.json"), "w") as f:
            f.write(report.to_json())
        log.info("row %s done", name)
    table = render_table(rows)
    with open(os.path.join(out, "table.txt"), "w", encoding="utf-8") as f:
        f.write(table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_stats(args) -> int:
    with open(args.manifest, "r", encoding="utf-8") as f:
        catalog, _ = parse_manifest(f.read())
    stats = language_stats(catalog)
    payload = {
        "length_histogram": {str(k): v for k, v in sorted(stats.length_histogram.items())},
        "modal_length": stats.modal_length(),
        "rank_frequency": [[w, c] for w, c in stats.rank_frequency],
        "vocabulary_size": len(stats.rank_frequency),
    }
    out = args.out or default_out("stats")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "stats.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True, indent=1)
    sys.stdout.write(
        f"expressions by token count: "
        f"{dict(sorted(stats.length_histogram.items()))}\n"
        f"vocabulary: {len(stats.rank_frequency)} words\n"
    )
    top = stats.rank_frequency[:10]
    for w, c in top:
        sys.stdout.write(f"  {w}\t{c}\n")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for path in args.reports:
        with open(path, "r", encoding="utf-8") as f:
            report = RunReport.from_json(f.read())
        name = report.kind if report.kind != "ego_obj" else report.mask_label
        if report.pretrain:
            name += "+pre"
        rows.append((name, report))
    table = render_table(rows)
    sys.stdout.write(table)
    out = args.out or default_out("report")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "table.txt"), "w", encoding="utf-8") as f:
        f.write(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="inon",
        description="containment/support stacking-outcome experiments",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", help="check a manifest's structural rules")
    sp.add_argument("manifest")
    sp.add_argument("--trials", action="store_true",
                    help="also require every robot trial directory on disk")
    sp.add_argument("--out")

    for name in ("synth", "train", "pretrain", "ablate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--out")

    sp = sub.add_parser("eval", help="evaluate a saved checkpoint")
    sp.add_argument("--model", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--store", required=True)
    sp.add_argument("--fold", default="test", choices=("train", "dev", "test"))
    sp.add_argument("--mode", default="robot", choices=("robot", "allpairs"))
    sp.add_argument("--mask", help="override the checkpoint's mask, e.g. ego+vis")
    sp.add_argument("--baselines", action="store_true",
                    help="also report majority-class and random baselines")
    sp.add_argument("--out")

    sp = sub.add_parser("stats", help="language statistics for a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out")

    sp = sub.add_parser("report", help="render run reports as a table")
    sp.add_argument("reports", nargs="+")
    sp.add_argument("--out")
    return p


COMMANDS = {
    "validate": cmd_validate,
    "synth": cmd_synth,
    "train": cmd_train,
    "pretrain": cmd_pretrain,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "stats": cmd_stats,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except DatasetValidationError as e:
        sys.stderr.write(str(e) + "\n")
        return EXIT_VALIDATION
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return EXIT_CONFIG
    except DATA_ERRORS as e:
        sys.stderr.write(f"data error: {e}\n")
        return EXIT_DATA
    except NumericError as e:
        sys.stderr.write(f"numeric failure: {e}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
