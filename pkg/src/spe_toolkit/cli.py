"""Command-line entry point: train, build-spe, similarity, attack,
export-annotations, evaluate.

Every subcommand accepts `--config FILE` (YAML) whose keys mirror the
flag names; explicit flags override config values. Progress goes to
standard error, machine-readable output to standard out or `--out`
files. Exit codes: 0 success, 2 configuration error, 3 data error,
4 internal invariant violation.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys

import click
import yaml

from . import model_io
from .attack import AttackOutcome, SynonymIndex, iter_attack, preset
from .classifier import evaluate_accuracy, train
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    IoError,
    ParseError,
    ToolkitError,
)
from .evaluation import (
    aggregate_annotations,
    build_report,
    export_annotation_sheet,
    ingest_annotations,
    write_annotation_sheet,
)
from .presets import task_names, task_preset
from .quantization import quantize
from .spe import (
    DEFAULT_EPSILON,
    build_spe,
    encoder_similarity,
    load_baseline_encoder,
)
from .text_pipeline import LabeledCorpus, load_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _log(msg: str) -> None:
    click.echo(msg, err=True)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def _merge(flags: dict, config: dict, key: str, default=None):
    """Explicit flag wins, then config file, then the default."""
    value = flags.get(key)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _require(value, name: str):
    if value is None:
        raise ConfigError(f"missing required option --{name.replace('_', '-')}")
    return value


@click.group()
def cli() -> None:
    """Train linear text classifiers, compose them into a sentence encoder,
    and run encoder-constrained word-substitution attacks."""


# ---------------------------------------------------------------------------
# train


@cli.command()
@click.option("--config", "-c", "config_path", type=str, default=None,
              help="YAML config file; flags override its keys.")
@click.option("--task", type=str, default=None,
              help=f"Task preset name ({', '.join(task_names())}).")
@click.option("--data", type=str, default=None, help="Training dataset path.")
@click.option("--test", type=str, default=None,
              help="Optional test dataset; prints accuracy.")
@click.option("--out", type=str, default=None, help="Model output path.")
@click.option("--dim", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--minn", type=int, default=None)
@click.option("--maxnn", type=int, default=None)
@click.option("--word-ngrams", "word_ngrams", type=int, default=None)
@click.option("--min-count", "min_count", type=int, default=None)
@click.option("--bucket-count", "bucket_count", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--no-lowercase", "no_lowercase", is_flag=True, default=None,
              help="Keep letter case during tokenization.")
@click.option("--subsample", type=int, default=None,
              help="Train on only the first N examples.")
@click.option("--quantize-budget", "quantize_budget", type=int, default=None,
              help="Quantize the trained model to at most this many bytes.")
@click.option("--show-preset", is_flag=True, default=False,
              help="Print the task's preset hyperparameters and exit.")
def train_cmd(config_path, show_preset, **flags) -> None:
    """Train one classifier with a task preset (plus overrides)."""
    config = _load_config(config_path)
    task = _require(_merge(flags, config, "task"), "task")
    hp = task_preset(task)
    overrides = {
        "dim": _merge(flags, config, "dim"),
        "epochs": _merge(flags, config, "epochs"),
        "lr": _merge(flags, config, "lr"),
        "minn": _merge(flags, config, "minn"),
        "maxnn": _merge(flags, config, "maxnn"),
        "word_ngram_order": _merge(flags, config, "word_ngrams"),
        "min_count": _merge(flags, config, "min_count"),
        "bucket_count": _merge(flags, config, "bucket_count"),
        "seed": _merge(flags, config, "seed"),
        "lowercase": (False if _merge(flags, config, "no_lowercase")
                      else _merge(flags, config, "lowercase")),
    }
    hp = dataclasses.replace(hp, **{k: v for k, v in overrides.items()
                                    if v is not None})
    if show_preset:
        click.echo(yaml.safe_dump(dataclasses.asdict(hp), sort_keys=True).rstrip())
        return
    data_path = _require(_merge(flags, config, "data"), "data")
    out_path = _merge(flags, config, "out", f"{task}.model")
    subsample = _merge(flags, config, "subsample")
    budget = _merge(flags, config, "quantize_budget")

    corpus = load_dataset(data_path)
    note = ""
    if subsample is not None:
        corpus = LabeledCorpus(corpus.examples[:subsample])
        note = f" subsample={subsample}"
    _log(f"task={task} examples={len(corpus)} dim={hp.dim} epochs={hp.epochs} "
         f"lr={hp.lr} minn={hp.minn} maxnn={hp.maxnn} "
         f"word_ngrams={hp.word_ngram_order} bucket_count={hp.bucket_count} "
         f"seed={hp.seed}{note}")
    model = train(corpus, hp, task_name=task)
    _log(f"trained: {model.feature_row_count} feature rows, "
         f"final epoch loss {model.epoch_losses[-1]:.4f}")
    if budget is not None:
        model = quantize(model, budget)
        _log(f"quantized to {model.achieved_size_bytes} bytes "
             f"({model.feature_row_count} rows retained)")
    size = model_io.save(model, out_path)
    _log(f"saved model to {out_path} ({size} bytes)")
    test_path = _merge(flags, config, "test")
    if test_path is not None:
        acc = evaluate_accuracy(model, load_dataset(test_path))
        click.echo(f"{task} accuracy: {acc:.3f}")


# ---------------------------------------------------------------------------
# build-spe


@cli.command(name="build-spe")
@click.option("--config", "-c", "config_path", type=str, default=None)
@click.option("--model", "-m", "models", type=str, multiple=True,
              help="Member model file (repeatable, order preserved).")
@click.option("--epsilon", type=float, default=None,
              help=f"Similarity threshold (default {DEFAULT_EPSILON}).")
@click.option("--out", type=str, default=None, help="Manifest output path.")
def build_spe_cmd(config_path, models, epsilon, out) -> None:
    """Compose trained classifiers into an ensemble encoder manifest."""
    config = _load_config(config_path)
    member_paths = list(models) or list(config.get("models", []))
    if not member_paths:
        raise ConfigError("no member models given (use -m or config 'models')")
    eps = epsilon if epsilon is not None else config.get("epsilon", DEFAULT_EPSILON)
    out_path = _require(out if out is not None else config.get("out"), "out")
    members = [_load_model(p) for p in member_paths]
    spe = build_spe(members, epsilon=eps)
    manifest = {
        "epsilon": spe.epsilon,
        "dim": spe.dim,
        "members": member_paths,
        "cost_estimate": spe.cost_estimate(),
    }
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    _log(f"wrote manifest {out_path}: {len(member_paths)} members, "
         f"dim={spe.dim}, epsilon={spe.epsilon}, "
         f"cost_estimate={manifest['cost_estimate']}")


def _load_model(path: str):
    if not os.path.exists(path):
        raise ConfigError(f"missing model file: {path}")
    return model_io.load(path)


def _load_spe_manifest(path: str):
    if not os.path.exists(path):
        raise ConfigError(f"missing ensemble manifest: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot parse ensemble manifest {path}: {exc}") from exc
    for key in ("epsilon", "members"):
        if key not in manifest:
            raise FormatError(f"ensemble manifest {path} lacks key {key!r}")
    root = os.path.dirname(os.path.abspath(path))
    members = []
    for member in manifest["members"]:
        member_path = member if os.path.isabs(member) else os.path.join(root, member)
        members.append(_load_model(member_path))
    return build_spe(members, epsilon=float(manifest["epsilon"]))


def _resolve_encoder(flags: dict, config: dict):
    spe_path = _merge(flags, config, "spe")
    baseline_path = _merge(flags, config, "baseline")
    if (spe_path is None) == (baseline_path is None):
        raise ConfigError("give exactly one of --spe or --baseline")
    if spe_path is not None:
        return _load_spe_manifest(spe_path)
    if not os.path.exists(baseline_path):
        raise ConfigError(f"missing baseline vectors: {baseline_path}")
    return load_baseline_encoder(baseline_path)


# ---------------------------------------------------------------------------
# similarity


@cli.command()
@click.option("--config", "-c", "config_path", type=str, default=None)
@click.option("--spe", type=str, default=None, help="Ensemble manifest path.")
@click.option("--baseline", type=str, default=None,
              help="Static word-vector file (baseline encoder).")
@click.option("--epsilon", type=float, default=None,
              help="Override the verdict threshold.")
@click.argument("sentence1")
@click.argument("sentence2")
def similarity(config_path, epsilon, sentence1, sentence2, **flags) -> None:
    """Print the similarity of two sentences and the threshold verdict."""
    config = _load_config(config_path)
    encoder = _resolve_encoder(flags, config)
    eps = _merge({"epsilon": epsilon}, config, "epsilon",
                 getattr(encoder, "epsilon", DEFAULT_EPSILON))
    score = encoder_similarity(encoder, sentence1, sentence2)
    verdict = "PRESERVED" if score > eps else "NOT-PRESERVED"
    click.echo(f"{score:.4f} {verdict}")


# ---------------------------------------------------------------------------
# attack


@cli.command()
@click.option("--config", "-c", "config_path", type=str, default=None)
@click.option("--victim", type=str, default=None, help="Victim model file.")
@click.option("--spe", type=str, default=None, help="Ensemble manifest path.")
@click.option("--baseline", type=str, default=None,
              help="Static word-vector file (baseline encoder).")
@click.option("--vectors", type=str, default=None,
              help="Word vectors used for substitution candidates.")
@click.option("--data", type=str, default=None, help="Dataset to attack.")
@click.option("--preset", "preset_name", type=str, default=None,
              help="Attack preset: textfooler or tfadjusted.")
@click.option("--limit", type=int, default=None,
              help="Attack only the first N sentences.")
@click.option("--jobs", type=int, default=None,
              help="Parallel attack workers (default: available cores).")
@click.option("--epsilon", type=float, default=None)
@click.option("--min-word-cos", "min_word_cos", type=float, default=None)
@click.option("--max-mod-fraction", "max_mod_fraction", type=float, default=None)
@click.option("--synonym-k", "synonym_k", type=int, default=None)
@click.option("--stopword-policy", "stopword_policy", type=str, default=None)
@click.option("--outcomes", "outcomes_path", type=str, default=None,
              help="Outcome JSONL output path (default outcomes.jsonl).")
@click.option("--report", "report_path", type=str, default=None,
              help="Metrics report output path (default report.json).")
def attack(config_path, **flags) -> None:
    """Attack a dataset and write outcomes plus a metrics report."""
    config = _load_config(config_path)
    victim_path = _require(_merge(flags, config, "victim"), "victim")
    vectors_path = _require(_merge(flags, config, "vectors"), "vectors")
    data_path = _require(_merge(flags, config, "data"), "data")
    preset_name = _merge(flags, config, "preset_name",
                         _merge(flags, config, "preset", "textfooler"))
    limit = _merge(flags, config, "limit")
    jobs = _merge(flags, config, "jobs", os.cpu_count() or 1)
    outcomes_path = _merge(flags, config, "outcomes_path",
                           _merge(flags, config, "outcomes", "outcomes.jsonl"))
    report_path = _merge(flags, config, "report_path",
                         _merge(flags, config, "report", "report.json"))

    victim = _load_model(victim_path)
    encoder = _resolve_encoder(flags, config)
    if not os.path.exists(vectors_path):
        raise ConfigError(f"missing word vectors: {vectors_path}")
    index = SynonymIndex.from_word_vectors(vectors_path)
    params = preset(preset_name, encoder=encoder, synonym_index=index)
    for key in ("epsilon", "min_word_cos", "max_mod_fraction", "synonym_k",
                "stopword_policy"):
        value = _merge(flags, config, key)
        if value is not None:
            params = dataclasses.replace(params, **{key: value})
    dataset = load_dataset(data_path)
    run_config = {
        "command": "attack",
        "preset": params.preset_name,
        "encoder": encoder.name,
        "epsilon": params.epsilon,
        "min_word_cos": params.min_word_cos,
        "max_mod_fraction": params.max_mod_fraction,
        "synonym_k": params.synonym_k,
        "stopword_policy": params.stopword_policy,
        "limit": limit,
        "victim": victim_path,
        "vectors": vectors_path,
        "data": data_path,
    }
    examples = dataset.examples if limit is None else dataset.examples[:limit]
    _log(f"attacking {len(examples)} sentences "
         f"(preset={params.preset_name}, encoder={encoder.name}, jobs={jobs})")

    outcomes: list[AttackOutcome] = []
    with open(outcomes_path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"config": run_config}, sort_keys=True) + "\n")
        f.flush()
        for out in iter_attack(victim, params, examples, jobs=jobs):
            outcomes.append(out)
            f.write(json.dumps(out.to_dict(), sort_keys=True) + "\n")
            f.flush()
    report = build_report(outcomes, None, run_config)
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    mod = "-" if report.mod_rate_pct is None else f"{report.mod_rate_pct:.1f}"
    click.echo(f"{params.preset_name}+{encoder.name} "
               f"ASR {report.asr_pct:.1f} rASR - mod {mod} "
               f"time {report.mean_wall_time_s:.3f}s "
               f"n {report.n_attackable}")


def read_outcomes(path: str) -> tuple[list[AttackOutcome], dict]:
    """Read an outcome JSONL file; returns (outcomes, run config)."""
    if not os.path.exists(path):
        raise IoError(f"outcomes file not found: {path}")
    outcomes: list[AttackOutcome] = []
    run_config: dict = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad JSON: {exc}", path=path,
                                 line_number=lineno) from None
            if "config" in record:
                run_config = record["config"]
                continue
            try:
                outcomes.append(AttackOutcome.from_dict(record))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad outcome record: {exc}", path=path,
                                 line_number=lineno) from None
    return outcomes, run_config


# ---------------------------------------------------------------------------
# export-annotations


@cli.command(name="export-annotations")
@click.option("--config", "-c", "config_path", type=str, default=None)
@click.option("--outcomes", "outcomes_path", type=str, default=None)
@click.option("--sample", type=int, default=None,
              help="Number of successful pairs to sample (default 100).")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=str, default=None, help="Sheet CSV output path.")
def export_annotations(config_path, **flags) -> None:
    """Sample successful attacks into a human-annotation sheet."""
    config = _load_config(config_path)
    outcomes_path = _require(_merge(flags, config, "outcomes_path",
                                    _merge(flags, config, "outcomes")),
                             "outcomes")
    sample = _merge(flags, config, "sample", 100)
    seed = _merge(flags, config, "seed", 0)
    out_path = _require(_merge(flags, config, "out"), "out")
    outcomes, _cfg = read_outcomes(outcomes_path)
    rows = export_annotation_sheet(outcomes, sample, seed=seed)
    write_annotation_sheet(rows, out_path)
    _log(f"wrote {len(rows)} annotation rows to {out_path} (seed={seed})")


# ---------------------------------------------------------------------------
# evaluate


@cli.command()
@click.option("--config", "-c", "config_path", type=str, default=None)
@click.option("--outcomes", "outcomes_path", type=str, default=None)
@click.option("--annotations", "annotations_path", type=str, default=None,
              help="Annotator score CSV; omit to report without rASR.")
@click.option("--out", type=str, default=None,
              help="Final report output path (default: stdout only).")
def evaluate(config_path, **flags) -> None:
    """Merge annotations into the final metrics report."""
    config = _load_config(config_path)
    outcomes_path = _require(_merge(flags, config, "outcomes_path",
                                    _merge(flags, config, "outcomes")),
                             "outcomes")
    annotations_path = _merge(flags, config, "annotations_path",
                              _merge(flags, config, "annotations"))
    out_path = _merge(flags, config, "out")
    outcomes, run_config = read_outcomes(outcomes_path)
    judgments = None
    if annotations_path is not None:
        judgments = aggregate_annotations(ingest_annotations(annotations_path))
    report = build_report(outcomes, judgments, run_config)
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        _log(f"wrote report to {out_path}")
    mod = "-" if report.mod_rate_pct is None else f"{report.mod_rate_pct:.1f}"
    if report.rasr.omitted:
        rasr_text = f"rASR: omitted ({report.rasr.reason})"
    else:
        rasr_text = f"rASR {report.rasr.value:.1f}"
    click.echo(f"ASR {report.asr_pct:.1f} {rasr_text} mod {mod} "
               f"time {report.mean_wall_time_s:.3f}s n {report.n_attackable}")


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> None:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.UsageError as exc:
        exc.show()
        sys.exit(EXIT_CONFIG)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_CONFIG)
    except KeyboardInterrupt:
        sys.exit(130)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    except ToolkitError as exc:
        click.echo(f"internal error: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)
    except Exception as exc:  # pragma: no cover - defensive
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
