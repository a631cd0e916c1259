"""Command-line entry point: ``gasfm <subcommand> --config run.yaml ...``.

Exit codes: 0 success, 2 usage or config error, 3 data error, 4 runtime failure.
Failures print one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import jsonschema

from .config import ConfigError, RunConfig, config_diff, load_config, parse_config
from .data import DataError, generate_synthetic_dataset, prepare_dataset, read_dataset, write_dataset
from .data.ingest import consolidate_readings, read_metadata, read_readings
from .data.windows import prepare_customers
from .manifest import LockError, RunManifest, directory_lock, read_manifest, verify_artifacts
from .model.network import CheckpointError, build_model, load_checkpoint, save_checkpoint

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
ARTIFACT_ROOT_ENV = "GASFM_ARTIFACT_ROOT"
THREADS_ENV = "GASFM_NUM_THREADS"

logger = logging.getLogger("gasfm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- shared helpers ------------------------------------------------------


def _out_dir(arg: str) -> Path:
    p = Path(arg)
    root = os.environ.get(ARTIFACT_ROOT_ENV)
    return p if p.is_absolute() or not root else Path(root) / p


def _existing(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{what} not found: {p}")
    return p


def _setup_threads(cfg: RunConfig) -> None:
    import torch

    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if n < 1:
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
    else:
        n = cfg.threads
    if n:
        torch.set_num_threads(n)


def _customers(args, cfg: RunConfig, manifest: RunManifest):
    from .evaluation import split_spec

    path = _existing(args.dataset, "dataset")
    manifest.add_input("dataset", path)
    series = read_dataset(path)
    if not series:
        raise DataError(f"{path}: dataset is empty")
    return prepare_customers(series, split_spec(cfg))


def _seed(args, cfg: RunConfig) -> int:
    return cfg.seed if getattr(args, "seed", None) is None else args.seed


def _write_report(report, out: Path, manifest: RunManifest, stem: str = "metrics") -> None:
    report.write_csv(out / f"{stem}.csv")
    report.write_json(out / f"{stem}.json")
    manifest.add_artifact(out / f"{stem}.csv")
    manifest.add_artifact(out / f"{stem}.json")


def _write_jsonl(path: Path, records) -> None:
    with path.open("w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


# -- subcommands ---------------------------------------------------------


def cmd_synth_data(args, cfg, out, manifest):
    seed = _seed(args, cfg)
    with manifest.stage("generate"):
        series, stats = generate_synthetic_dataset(cfg.data.synthetic, seed)
    write_dataset(out / "dataset.jsonl", series)
    (out / "dataset_stats.json").write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest.add_artifact(out / "dataset.jsonl")
    manifest.add_artifact(out / "dataset_stats.json")
    return {"customers": len(series)}


def cmd_prepare_data(args, cfg, out, manifest):
    if bool(args.dataset) == bool(args.readings):
        raise UsageError("prepare-data needs exactly one of --dataset or --readings")
    if args.dataset:
        path = _existing(args.dataset, "dataset")
        manifest.add_input("dataset", path)
        series = read_dataset(path)
    else:
        path = _existing(args.readings, "readings")
        manifest.add_input("readings", path)
        meta = None
        if args.metadata:
            manifest.add_input("metadata", _existing(args.metadata, "metadata"))
            meta = read_metadata(args.metadata)
        series = consolidate_readings(read_readings(path), meta)
    diagnostics: list[str] = []
    with manifest.stage("prepare"):
        prepared, stats = prepare_dataset(series, cfg.data.screening, diagnostics=diagnostics)
    write_dataset(out / "prepared.jsonl", prepared)
    stats_d = stats.to_dict()
    (out / "dataset_stats.json").write_text(json.dumps(stats_d, indent=2, sort_keys=True) + "\n")
    (out / "diagnostics.txt").write_text("".join(d + "\n" for d in diagnostics))
    for name in ("prepared.jsonl", "dataset_stats.json", "diagnostics.txt"):
        manifest.add_artifact(out / name)
    return {"customers_in": len(series), "customers_out": len(prepared), "weighted_adf": stats_d.get("weighted_adf")}


def cmd_pretrain(args, cfg, out, manifest):
    from .pretrain import pretrain

    customers = _customers(args, cfg, manifest)
    seed = _seed(args, cfg)
    model = build_model(cfg.model, cfg.data.split.history_len, seed)
    with manifest.stage("pretrain"):
        res = pretrain(model, customers, cfg.pretrain, seed, log_path=out / "pretrain_log.jsonl")
    save_checkpoint(res.model, out / "pretrained.pt", {"stage": "pretrain", "seed": seed})
    manifest.add_artifact(out / "pretrain_log.jsonl")
    manifest.add_artifact(out / "pretrained.pt")
    return {"steps": cfg.pretrain.steps, "final_loss": res.log[-1]["loss"] if res.log else None}


def cmd_finetune(args, cfg, out, manifest):
    from .finetune import finetune

    if bool(args.checkpoint) == bool(args.from_scratch):
        raise UsageError("finetune needs exactly one of --checkpoint or --from-scratch")
    customers = _customers(args, cfg, manifest)
    seed = _seed(args, cfg)
    horizon = args.horizon or cfg.finetune.horizon
    if args.horizon:
        tree = cfg.snapshot()
        tree["finetune"]["horizon"] = horizon
        cfg = parse_config(tree)
    if args.checkpoint:
        manifest.add_input("checkpoint", _existing(args.checkpoint, "checkpoint"))
        base = load_checkpoint(args.checkpoint)
    else:
        base = build_model(cfg.model, cfg.data.split.history_len, seed)
    with manifest.stage("finetune"):
        res = finetune(base, customers, cfg.finetune, seed, log_path=out / f"finetune_log_h{horizon}.jsonl", history_len=cfg.data.split.history_len)
    name = f"finetuned_h{horizon}.pt"
    save_checkpoint(res.model, out / name, {"stage": "finetune", "seed": seed, "horizon": horizon, "from_scratch": bool(args.from_scratch)})
    manifest.add_artifact(out / f"finetune_log_h{horizon}.jsonl")
    manifest.add_artifact(out / name)
    return {"horizon": horizon, "best_epoch": res.best_epoch, "val_mse": res.val_curve[res.best_epoch - 1] if res.best_epoch else None}


def cmd_evaluate(args, cfg, out, manifest):
    from .evaluation import evaluate_model, split_spec
    from .evaluation.report import MetricReport, scatter_rows, write_scatter

    customers = _customers(args, cfg, manifest)
    horizons = args.horizons or cfg.evaluation.horizons
    ev = cfg.evaluation

    def run(checkpoints, label):
        report = MetricReport(label)
        for h in horizons:
            model = next((m for m in checkpoints if str(h) in m.heads), None)
            if model is None:
                raise CheckpointError(f"no checkpoint provides a forecast head for horizon {h}")
            part = evaluate_model(model, customers, [h], split_spec(cfg, h), ev.test_stride, ev.batch_size, ev.mase_denominator, label)
            report.rows.extend(part.rows)
            report.excluded.update(part.excluded)
        return report

    models = []
    for i, ck in enumerate(args.checkpoint):
        manifest.add_input(f"checkpoint[{i}]", _existing(ck, "checkpoint"))
        models.append(load_checkpoint(ck))
    with manifest.stage("evaluate"):
        report = run(models, "model")
    _write_report(report, out, manifest)
    if args.export_forecasts:
        _export_forecasts(models, customers, horizons, cfg, out / "forecasts.csv")
        manifest.add_artifact(out / "forecasts.csv")
    if args.baseline:
        if args.baseline == "naive":
            base = evaluate_model("naive", customers, horizons, split_spec(cfg), ev.test_stride, ev.batch_size, ev.mase_denominator, "naive")
        else:
            manifest.add_input("baseline", _existing(args.baseline, "baseline checkpoint"))
            base = run([load_checkpoint(args.baseline)], "baseline")
        _write_report(base, out, manifest, "baseline_metrics")
        write_scatter(out / "scatter.csv", scatter_rows(report, base))
        manifest.add_artifact(out / "scatter.csv")
    return {"grand": report.grand()}


def _export_forecasts(models, customers, horizons, cfg, path: Path) -> None:
    import datetime as dt

    from .evaluation import customer_test_windows, split_spec
    from .finetune import ForecastResult, batched_forecast, write_forecasts

    rows = []
    for h in horizons:
        model = next(m for m in models if str(h) in m.heads)
        for c in customers:
            win = customer_test_windows(c, split_spec(cfg, h), h, cfg.evaluation.test_stride)
            if win is None:
                continue
            origins, x, y = win
            pred = batched_forecast(model, x, h, cfg.evaluation.batch_size)
            for t, p, target in zip(origins, pred, y):
                day = c.series.start_date + dt.timedelta(days=int(t))
                rows.append((ForecastResult(c.customer_id, int(t), day, p, c.stats.denormalize(p)), target, c.stats))
    write_forecasts(path, rows)


def _save_outcome(outcome, out: Path, manifest: RunManifest, prefix: str = "") -> None:
    _write_report(outcome.report, out, manifest, f"{prefix}metrics")
    if outcome.pretrain_log:
        _write_jsonl(out / f"{prefix}pretrain_log.jsonl", outcome.pretrain_log)
        manifest.add_artifact(out / f"{prefix}pretrain_log.jsonl")
    for h, log in sorted(outcome.finetune_logs.items()):
        _write_jsonl(out / f"{prefix}finetune_log_h{h}.jsonl", log)
        manifest.add_artifact(out / f"{prefix}finetune_log_h{h}.jsonl")


def _partition_protocol(run_fn, args, cfg, out, manifest):
    customers = _customers(args, cfg, manifest)
    source = cfg.evaluation.source_part if args.source_part is None else args.source_part
    with manifest.stage(run_fn.__name__):
        outcome = run_fn(customers, cfg, source_part=source, seed=_seed(args, cfg), horizons=args.horizons)
    _save_outcome(outcome, out, manifest)
    prov = {
        "source_part": source,
        "partition_seed": cfg.evaluation.partition_seed,
        "guards": [{"label": g.label, "checked": g.checked, "violations": g.violations, "allowed": len(g.allowed)} for g in outcome.guards],
    }
    (out / "provenance.json").write_text(json.dumps(prov, indent=2, sort_keys=True) + "\n")
    manifest.add_artifact(out / "provenance.json")
    return {"grand": outcome.report.grand(), "violations": outcome.violations}


def cmd_transfer(args, cfg, out, manifest):
    from .evaluation import run_transfer

    return _partition_protocol(run_transfer, args, cfg, out, manifest)


def cmd_zero_shot(args, cfg, out, manifest):
    from .evaluation import run_zero_shot

    return _partition_protocol(run_zero_shot, args, cfg, out, manifest)


def cmd_ablation(args, cfg, out, manifest):
    from .evaluation import ABLATION_VARIANTS, ablation_config, run_ablation

    customers = _customers(args, cfg, manifest)
    variants = args.variants or list(ABLATION_VARIANTS)
    with manifest.stage("ablation"):
        outcomes = run_ablation(customers, cfg, variants, seed=_seed(args, cfg), horizon=args.horizon)
    summary = {}
    for v, oc in outcomes.items():
        _save_outcome(oc, out, manifest, f"{v}_")
        diff = config_diff(cfg, ablation_config(cfg, v))
        summary[v] = {"config_diff": {k: list(ab) for k, ab in diff.items()}, "grand": oc.report.grand()}
    (out / "ablation_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest.add_artifact(out / "ablation_summary.json")
    return summary


def cmd_report(args, cfg, out, manifest):
    from .evaluation.report import SUMMARY_SCHEMA, MetricReport

    src = read_manifest(args.manifest)
    problems = verify_artifacts(src)
    if problems:
        raise DataError("manifest artifacts failed verification: " + "; ".join(problems))
    manifest.inputs["manifest"] = _sha_manifest(src)
    tables = {}
    for rel in sorted(src["artifacts"]):
        if not rel.endswith("metrics.json"):
            continue
        summary = json.loads((src["_dir"] / rel).read_text())
        try:
            jsonschema.validate(summary, SUMMARY_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise DataError(f"{rel}: summary does not match the schema: {exc.message}") from None
        csv_rel = rel[: -len(".json")] + ".csv"
        if csv_rel not in src["artifacts"]:
            raise DataError(f"{rel}: companion {csv_rel} is missing from the manifest")
        rebuilt = MetricReport.read_csv(src["_dir"] / csv_rel)
        for h, agg in summary["per_horizon"].items():
            again = rebuilt.aggregate(int(h))
            for m in ("mse", "mae", "smape", "mase"):
                a, b = agg[m], again[m]
                if (a is None) != (b is None) or (a is not None and not math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)):
                    raise DataError(f"{rel}: horizon {h} {m} does not match the per-customer rows")
        tables[rel] = summary
    if not tables:
        raise DataError("manifest lists no metric summaries")
    lines = ["| file | horizon | customers | MSE | MAE | SMAPE | MASE |", "|---|---|---|---|---|---|---|"]
    for rel, s in tables.items():
        for h, a in s["per_horizon"].items():
            cells = [f"{a[m]:.4f}" if a[m] is not None else "n/a" for m in ("mse", "mae", "smape", "mase")]
            lines.append(f"| {rel} | {h} | {a['customers']} | " + " | ".join(cells) + " |")
    (out / "report.md").write_text("\n".join(lines) + "\n")
    (out / "report.json").write_text(json.dumps(tables, indent=2, sort_keys=True) + "\n")
    manifest.add_artifact(out / "report.md")
    manifest.add_artifact(out / "report.json")
    print("\n".join(lines))
    return {"validated": sorted(tables)}


def _sha_manifest(src: dict) -> str:
    import hashlib

    body = {k: v for k, v in src.items() if k != "_dir"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


COMMANDS = {
    "synth-data": cmd_synth_data,
    "prepare-data": cmd_prepare_data,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "transfer": cmd_transfer,
    "zero-shot": cmd_zero_shot,
    "ablation": cmd_ablation,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gasfm", description="Gas demand forecasting: data, pretraining, fine-tuning, evaluation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, dataset=True, seed=True):
        sp.add_argument("--config", required=True, help="YAML run config (an empty file means all defaults)")
        sp.add_argument("--out", required=True, help="output directory (relative paths go under $GASFM_ARTIFACT_ROOT)")
        if dataset:
            sp.add_argument("--dataset", required=True, help="prepared dataset JSONL")
        if seed:
            sp.add_argument("--seed", type=int, help="overrides the config seed")
        return sp

    common(sub.add_parser("synth-data", help="generate a synthetic dataset"), dataset=False)
    sp = common(sub.add_parser("prepare-data", help="screen, impute and summarize a dataset"), dataset=False, seed=False)
    sp.add_argument("--dataset", help="series JSONL")
    sp.add_argument("--readings", help="raw meter readings (CSV or JSONL)")
    sp.add_argument("--metadata", help="customer metadata CSV")
    common(sub.add_parser("pretrain", help="self-supervised pretraining"))
    sp = common(sub.add_parser("finetune", help="supervised fine-tuning for one horizon"))
    sp.add_argument("--checkpoint", help="pretrained checkpoint")
    sp.add_argument("--from-scratch", action="store_true", help="start from a randomly initialized model")
    sp.add_argument("--horizon", type=int, help="overrides finetune.horizon")
    sp = common(sub.add_parser("evaluate", help="score checkpoints on the test windows"), seed=False)
    sp.add_argument("--checkpoint", action="append", required=True, help="fine-tuned checkpoint (repeatable)")
    sp.add_argument("--horizons", type=int, nargs="+", help="overrides evaluation.horizons")
    sp.add_argument("--baseline", help="'naive' or a checkpoint to compare against (writes scatter.csv)")
    sp.add_argument("--export-forecasts", action="store_true", help="also write every test forecast to forecasts.csv")
    for name in ("transfer", "zero-shot"):
        sp = common(sub.add_parser(name, help=f"{name} protocol over a two-way customer partition"))
        sp.add_argument("--source-part", type=int, choices=(0, 1), help="overrides evaluation.source_part")
        sp.add_argument("--horizons", type=int, nargs="+", help="overrides evaluation.horizons")
    sp = common(sub.add_parser("ablation", help="full model vs. one component disabled"))
    sp.add_argument("--variants", nargs="+", choices=("full", "wo_cl", "wo_dn", "wo_fn"))
    sp.add_argument("--horizon", type=int, default=180)
    sp = common(sub.add_parser("report", help="validate and tabulate the metrics of a run"), dataset=False, seed=False)
    sp.add_argument("--manifest", required=True, help="manifest.json (or its directory) of an earlier run")
    return p


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        err["problems"] = exc.problems
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    from .finetune import IncompatibleCheckpoint

    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        _setup_threads(cfg)
        out = _out_dir(args.out)
        with directory_lock(out):
            manifest = RunManifest(args.command, out, cfg.snapshot(), _seed(args, cfg) if hasattr(args, "seed") else None)
            result = COMMANDS[args.command](args, cfg, out, manifest)
            manifest.write()
    except (UsageError, ConfigError) as exc:
        return _fail(EXIT_USAGE, exc)
    except (DataError, CheckpointError, IncompatibleCheckpoint) as exc:
        return _fail(EXIT_DATA, exc)
    except LockError as exc:
        return _fail(EXIT_RUNTIME, exc)
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        logger.debug("runtime failure", exc_info=True)
        return _fail(EXIT_RUNTIME, exc)
    print(json.dumps({"command": args.command, "out": str(out), "result": result}, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
