"""Command line entry point.

    adlens synth --out DIR [--seed N]
    adlens {ingest,resolve,train,classify,report} -c CONFIG [--seed N] [--out DIR] ...

Every command writes its artifact under `<out>` through a temporary sibling
that is renamed into place only when the command succeeds. Failures print a
single `adlens-error code=<n> kind=<class> message=<json>` line on stderr.
"""
import argparse
from dataclasses import replace
import json
from pathlib import Path
import sys
import time
import typing as tp

from loguru import logger

from . import report, synth
from .__version__ import VERSION
from .config import RunConfig, apply_overrides, load_config, validate_config
from .errors import AdlensError, ValidationError
from .stance import load_pipeline, save_pipeline
from .stance.states import find_pipeline
from .store import save_dataset
from .utils import atomic_output, human_seconds

COMMANDS = ("ingest", "resolve", "train", "classify", "report")


def get_parser():
    parser = argparse.ArgumentParser("adlens", description="Political ad archive analysis.")
    parser.add_argument("--version", action="version", version=f"adlens {VERSION}")
    parser.add_argument("--log-level", default="INFO",
                        choices=["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"])
    parser.add_argument("--progress", action="store_true", help="Show progress bars.")
    commands = parser.add_subparsers(dest="command", required=True)

    synth_parser = commands.add_parser("synth", help="Write the synthetic fixture bundle.")
    synth_parser.add_argument("--out", type=Path, required=True)
    synth_parser.add_argument("--seed", type=int, default=0)

    helps = {
        "ingest": "Keyword-filter and deduplicate the archive, write <out>/dataset.",
        "resolve": "Resolve page entities against the gazetteer, write <out>/resolved.",
        "train": "Train the two-stage stance pipeline, write <out>/models.",
        "classify": "Classify every ad with a trained pipeline, write <out>/stances.csv.",
        "report": "Run the whole chain and write <out>/report.",
    }
    for name in COMMANDS:
        sub = commands.add_parser(name, help=helps[name])
        sub.add_argument("-c", "--config", type=Path, required=True, help="YAML run config.")
        sub.add_argument("--seed", type=int)
        sub.add_argument("--period-start", help="YYYY-MM-DD, overrides period.start.")
        sub.add_argument("--period-end", help="YYYY-MM-DD, overrides period.end.")
        sub.add_argument("--out", help="Output directory, overrides out.")
        sub.add_argument("--workers", type=int, help="Worker threads, 0 runs inline.")
        if name == "classify":
            sub.add_argument("--model", type=Path,
                             help="Saved pipeline; defaults to the one in <out>/models.")
    return parser


def error_line(error: BaseException) -> str:
    code = error.exit_code if isinstance(error, AdlensError) else 1
    return f"adlens-error code={code} kind={type(error).__name__} message={json.dumps(str(error))}"


def cmd_synth(out: Path, seed: int = 0) -> Path:
    return synth.write_bundle(out, seed)


def cmd_ingest(cfg: RunConfig, progress: bool = False) -> Path:
    _, dataset = report.load_inputs(cfg)
    kept = {ad.id for ad in dataset.ads + dataset.baseline_ads}
    annotations = [r for r in dataset.annotations if r.ad_id in kept]
    if len(annotations) < len(dataset.annotations):
        logger.warning(f"Dropping {len(dataset.annotations) - len(annotations)} annotations "
                       "of ads outside the ingested set")
    dataset = replace(dataset, annotations=annotations)
    with atomic_output(cfg.out / "dataset") as tmp:
        save_dataset(dataset, tmp, cfg.period)
    return cfg.out / "dataset"


def cmd_resolve(cfg: RunConfig, progress: bool = False) -> Path:
    _, dataset = report.load_inputs(cfg)
    dataset = report.resolve_dataset(cfg, dataset)
    with atomic_output(cfg.out / "resolved") as tmp:
        save_dataset(dataset, tmp, cfg.period)
    return cfg.out / "resolved"


def cmd_train(cfg: RunConfig, progress: bool = False) -> Path:
    raw, _ = report.load_inputs(cfg)
    training = report.train_stance(cfg, raw, progress)
    with atomic_output(cfg.out / "models") as tmp:
        save_pipeline(training.pipeline, tmp)
        for name, grid in (("grid_relevance", training.relevance_grid),
                           ("grid_leaning", training.leaning_grid)):
            if grid is not None:
                grid.to_frame().to_csv(tmp / f"{name}.csv", index=False)
    return cfg.out / "models"


def cmd_classify(cfg: RunConfig, progress: bool = False, model: tp.Optional[Path] = None) -> Path:
    if model is None:
        models = cfg.out / "models"
        if not models.is_dir():
            raise ValidationError(f"no trained model in {models}: run train first or pass --model")
        model = find_pipeline(models)
    pipeline = load_pipeline(model)
    _, dataset = report.load_inputs(cfg)
    stances = report.classify_ads(pipeline, dataset.ads)
    target = cfg.out / "stances.csv"
    with atomic_output(target, directory=False) as tmp:
        report.stances_frame(stances).to_csv(tmp, index=False)
    return target


def cmd_report(cfg: RunConfig, progress: bool = False) -> Path:
    target = cfg.out / "report"
    if not cfg.report.any:
        with atomic_output(target):
            pass
        logger.info("Every report section is switched off, the report is empty")
        return target
    raw, dataset = report.load_inputs(cfg)
    dataset = report.resolve_dataset(cfg, dataset)
    training = report.train_stance(cfg, raw, progress)
    stances = report.classify_ads(training.pipeline, dataset.ads)
    bundle = report.build_report(cfg, raw, dataset, training, stances, progress)
    with atomic_output(target) as tmp:
        report.write_bundle(bundle, tmp)
    return target


HANDLERS = {
    "ingest": cmd_ingest,
    "resolve": cmd_resolve,
    "train": cmd_train,
    "classify": cmd_classify,
    "report": cmd_report,
}


def _configure_logging(level: str):
    logger.remove()
    logger.add(sys.stderr, level=level, format="{time:HH:mm:ss} | {level: <8} | {message}")


def run(args: argparse.Namespace) -> Path:
    if args.command == "synth":
        return cmd_synth(args.out, args.seed)
    cfg = apply_overrides(load_config(args.config), seed=args.seed, period_start=args.period_start,
                          period_end=args.period_end, out=args.out, workers=args.workers)
    require = ("seed", "out", "period") if args.command == "report" else ("seed", "out")
    validate_config(cfg, require)
    if args.command == "classify":
        return cmd_classify(cfg, args.progress, args.model)
    return HANDLERS[args.command](cfg, args.progress)


def main(argv: tp.Optional[tp.Sequence[str]] = None) -> int:
    args = get_parser().parse_args(argv)
    _configure_logging(args.log_level)
    begin = time.time()
    try:
        result = run(args)
    except Exception as error:
        logger.opt(exception=error).debug(f"{args.command} failed")
        print(error_line(error), file=sys.stderr)
        return error.exit_code if isinstance(error, AdlensError) else 1
    logger.info(f"{args.command} wrote {result} in {human_seconds(time.time() - begin)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
