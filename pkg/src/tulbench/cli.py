"""
Command-line entry point.

    tulbench ingest --format brightkite loc-brightkite_totalCheckins.txt.gz
    tulbench preprocess --format gowalla raw.txt --timescale monthly --out data/gowalla-monthly
    tulbench run --config experiment.json --users 92
    tulbench analyze sweep-d --dataset data/brightkite-daily --out results/

Exit codes: 0 success, 2 configuration error, 3 ingest error, 4 runtime error.
The default output root comes from ``$TULBENCH_OUTPUT_ROOT`` when set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence

from . import analyze as an
from .encode import Sampler
from .evaluate import cross_validate, write_report_json, write_reports_csv
from .ingest import SCHEMAS, IngestError, ParseStats, parse_with_schema, summarize
from .model import TIMESCALES, SegmentedDataset
from .pipeline import PipelineConfig, build_dataset, load_dataset, save_dataset
from .synthetic import SyntheticSpec, generate_synthetic

logger = logging.getLogger("tulbench")

EXIT_OK, EXIT_CONFIG, EXIT_INGEST, EXIT_RUNTIME = 0, 2, 3, 4
OUTPUT_ROOT_ENV = "TULBENCH_OUTPUT_ROOT"
PREPROCESSED = "preprocessed"


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Everything one ``run`` needs. ``schema="preprocessed"`` loads a saved dataset."""

    dataset: str = ""
    schema: str = "canonical"
    timescale: str = "daily"
    min_checkins: Optional[int] = None
    min_trajectories: int = 10
    d: int = 1
    sampler: str = "max"
    k: int = 3
    acc_at: List[int] = field(default_factory=lambda: [1, 5])
    n_folds: int = 3
    seed: Optional[int] = None
    out: str = ""
    name: str = "experiment"
    users: Optional[int] = None
    metric: str = "euclidean"

    def validate(self) -> None:
        problems = []
        if not self.dataset:
            problems.append("dataset path is required")
        elif self.schema == PREPROCESSED:
            if not os.path.exists(_strip_suffix(self.dataset) + ".tsv"):
                problems.append(f"preprocessed dataset not found: {self.dataset}")
        elif not os.path.exists(self.dataset):
            problems.append(f"dataset not found: {self.dataset}")
        if self.schema != PREPROCESSED and self.schema not in SCHEMAS:
            problems.append(f"unknown schema {self.schema!r}; known: {', '.join(sorted(SCHEMAS))}, {PREPROCESSED}")
        if self.timescale not in TIMESCALES:
            problems.append(f"timescale must be one of {TIMESCALES}")
        if self.d not in (1, 2, 3):
            problems.append(f"d must be 1, 2 or 3, got {self.d}")
        if self.sampler not in {s.value for s in Sampler}:
            problems.append(f"unknown sampler {self.sampler!r}")
        if self.metric not in ("euclidean", "jaccard"):
            problems.append(f"unknown metric {self.metric!r}")
        if self.k < 1:
            problems.append("k must be >= 1")
        if not self.acc_at or min(self.acc_at) < 1:
            problems.append("acc_at must list positive ranks")
        if self.n_folds < 2:
            problems.append("n_folds must be >= 2")
        if self.seed is None or isinstance(self.seed, bool) or not isinstance(self.seed, int):
            problems.append("seed is mandatory and must be an integer")
        if self.users is not None and self.users < 1:
            problems.append("users must be >= 1")
        if self.min_checkins is not None and self.min_checkins < 1:
            problems.append("min_checkins must be >= 1")
        if self.min_trajectories < 1:
            problems.append("min_trajectories must be >= 1")
        if not self.name or os.sep in self.name:
            problems.append("name must be a plain directory name")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def from_sources(cls, path: Optional[str], overrides: Dict) -> "ExperimentConfig":
        """Defaults, then the JSON file, then non-None flag values."""
        data = {}
        if path:
            try:
                with open(path, encoding="utf-8") as fh:
                    data = json.load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
            known = {f.name for f in fields(cls)}
            unknown = set(data) - known
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


def _strip_suffix(path: str) -> str:
    return os.path.splitext(path)[0] if path.endswith((".tsv", ".json")) else path


def _output_root(arg: Optional[str]) -> str:
    return arg or os.environ.get(OUTPUT_ROOT_ENV) or "results"


def _threads(arg: Optional[int]) -> int:
    return arg if arg else (os.cpu_count() or 1)


def _load_records(path: str, schema: str, max_reject: float):
    stats = ParseStats()
    records = list(parse_with_schema(path, SCHEMAS[schema], max_reject, stats))
    return records, stats


def _dataset_from_raw(path, schema, timescale, min_checkins, min_trajs, max_reject=0.01,
                      relabel_order="user_time") -> SegmentedDataset:
    records, stats = _load_records(path, schema, max_reject)
    logger.info("parsed %d records from %s (%d rejected)", stats.accepted, path, stats.rejected)
    config = PipelineConfig(timescale, min_checkins, min_trajs, relabel_order=relabel_order)
    return build_dataset(records, config)


class _Staging:
    """Write into a quarantined temp dir and move it into place only on success."""

    def __init__(self, root: str, name: str):
        self.root, self.name = root, name
        self.target = os.path.join(root, name)

    def __enter__(self) -> str:
        os.makedirs(self.root, exist_ok=True)
        self.tmp = tempfile.mkdtemp(prefix=f".{self.name}.partial-", dir=self.root)
        self._handler = logging.FileHandler(os.path.join(self.tmp, "log.txt"), encoding="utf-8")
        self._handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        logging.getLogger("tulbench").addHandler(self._handler)
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        logging.getLogger("tulbench").removeHandler(self._handler)
        self._handler.close()
        if exc_type is not None:
            print(f"partial output kept in {self.tmp}", file=sys.stderr)
            return False
        if os.path.exists(self.target):
            shutil.rmtree(self.target)
        os.replace(self.tmp, self.target)
        return False


def cmd_ingest(args) -> int:
    stats = ParseStats()
    summary = summarize(parse_with_schema(args.file, SCHEMAS[args.format], args.max_reject, stats))
    summary = replace(summary, rejected_lines=stats.rejected)
    text = json.dumps(summary.to_dict(), indent=2)
    print(text)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    try:
        config = PipelineConfig(args.timescale, args.min_checkins, args.min_trajs,
                                relabel_order=args.relabel_order)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    records, stats = _load_records(args.file, args.format, args.max_reject)
    dataset = build_dataset(records, config)
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    save_dataset(dataset, args.out)
    print(json.dumps(dataset.summary(), indent=2))
    return EXIT_OK


def _experiment_dataset(cfg: ExperimentConfig) -> SegmentedDataset:
    if cfg.schema == PREPROCESSED:
        dataset = load_dataset(cfg.dataset)
    else:
        dataset = _dataset_from_raw(cfg.dataset, cfg.schema, cfg.timescale,
                                    cfg.min_checkins, cfg.min_trajectories)
    if cfg.users is not None:
        if cfg.users > dataset.user_count:
            logger.warning("requested %d users, dataset has %d", cfg.users, dataset.user_count)
        dataset = dataset.restrict_users(dataset.top_users(cfg.users))
    return dataset


def cmd_run(args) -> int:
    overrides = {
        "dataset": args.dataset, "schema": args.format, "timescale": args.timescale,
        "min_checkins": args.min_checkins, "min_trajectories": args.min_trajs,
        "d": args.d, "sampler": args.sampler, "k": args.k, "acc_at": args.acc_at,
        "n_folds": args.folds, "seed": args.seed, "out": args.out, "name": args.name,
        "users": args.users, "metric": args.metric,
    }
    cfg = ExperimentConfig.from_sources(args.config, overrides)
    cfg.out = _output_root(cfg.out)
    cfg.validate()
    with _Staging(cfg.out, cfg.name) as tmp:
        with open(os.path.join(tmp, "config.json"), "w", encoding="utf-8") as fh:
            json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
            fh.write("\n")
        dataset = _experiment_dataset(cfg)
        logger.info("dataset: %s", dataset.summary())
        report = cross_validate(dataset, cfg.d, cfg.sampler, cfg.k, cfg.acc_at, cfg.seed,
                                cfg.n_folds, cfg.metric, _threads(args.threads))
        write_report_json(report, os.path.join(tmp, "report.json"),
                          {"dataset": dataset.summary(), "machine": an.machine_description()})
        write_reports_csv([({"name": cfg.name, "d": cfg.d, "k": cfg.k, "sampler": cfg.sampler,
                             "users": dataset.user_count}, report)],
                          os.path.join(tmp, "report.csv"),
                          ["name", "d", "k", "sampler", "users"])
    print(json.dumps({"output": os.path.join(cfg.out, cfg.name),
                      "acc_at": report.to_dict()["acc_at"], "macro_f1": report.macro_f1}, indent=2))
    return EXIT_OK


def _analysis_dataset(args) -> SegmentedDataset:
    if args.dataset:
        return load_dataset(args.dataset)
    if args.input:
        return _dataset_from_raw(args.input, args.format, args.timescale,
                                 args.min_checkins, args.min_trajs)
    raise ConfigError("give --dataset (preprocessed) or --input with --format")


def _write_reports(tmp, stem, results, key, extra=None):
    an.write_csv(an.report_rows(results, key), os.path.join(tmp, f"{stem}.csv"),
                 an.report_columns(key, results))
    doc = {str(v): r.to_dict() for v, r in results.items()}
    if extra:
        doc = {"results": doc, **extra}
    an.write_json(doc, os.path.join(tmp, f"{stem}.json"))


def _synthetic_spec(path: Optional[str]) -> SyntheticSpec:
    if not path:
        return SyntheticSpec()
    try:
        with open(path, encoding="utf-8") as fh:
            return SyntheticSpec.from_dict(json.load(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read spec {path}: {exc.strerror}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synthetic spec {path}: {exc}") from exc


def cmd_analyze(args) -> int:
    if args.seed is None:
        raise ConfigError("--seed is mandatory")
    if args.d not in (1, 2, 3):
        raise ConfigError(f"d must be 1, 2 or 3, got {args.d}")
    workers = _threads(args.threads)
    name = args.name or args.kind
    root = _output_root(args.out)
    kind = args.kind

    if kind == "intervals":
        if not args.input and not args.spec:
            raise ConfigError("intervals needs --input/--format or --spec")
    elif kind != "synth":
        dataset = _analysis_dataset(args)

    with _Staging(root, name) as tmp:
        if kind == "jaccard":
            users, matrix = an.jaccard_matrix(dataset, args.top)
            cols, rows = an.matrix_rows(users, matrix)
            an.write_csv(rows, os.path.join(tmp, "jaccard.csv"), cols)
            an.write_json({"users": users, "matrix": matrix.tolist()},
                          os.path.join(tmp, "jaccard.json"))
        elif kind == "uniqueness":
            stats = an.uniqueness_stats(dataset, args.top)
            an.write_json(stats.to_dict(), os.path.join(tmp, "uniqueness.json"))
            an.write_csv([{"user": u, "venue_set_size": n} for u, n in stats.venue_set_sizes.items()],
                         os.path.join(tmp, "uniqueness.csv"), ["user", "venue_set_size"])
        elif kind == "venues":
            dist = an.venue_distribution(dataset, args.top, args.selection)
            an.write_csv([{"user": u, "venue": v} for u, vs in dist.items() for v in vs],
                         os.path.join(tmp, "venues.csv"), ["user", "venue"])
            an.write_json({str(u): vs for u, vs in dist.items()}, os.path.join(tmp, "venues.json"))
        elif kind == "sweep-k":
            errors = an.sweep_k(dataset, args.d, args.k_values, args.seed, args.sampler,
                                workers=workers)
            an.write_csv([{"k": k, "error_rate": e} for k, e in errors.items()],
                         os.path.join(tmp, "sweep_k.csv"), ["k", "error_rate"])
            an.write_json({str(k): e for k, e in errors.items()}, os.path.join(tmp, "sweep_k.json"))
        elif kind == "sweep-d":
            results = an.sweep_d(dataset, args.d_values, args.sampler, args.k, args.seed,
                                 workers=workers)
            _write_reports(tmp, "sweep_d", results, "d")
        elif kind == "scaling":
            results = an.scaling_curve(dataset, args.user_counts, args.k, args.d, args.seed,
                                       args.sampler, workers=workers)
            _write_reports(tmp, "scaling", results, "users")
        elif kind == "timing":
            prof = an.timing_profile(dataset, args.k, args.d, args.seed, args.sampler,
                                     workers=workers)
            an.write_json(prof.to_dict(), os.path.join(tmp, "timing.json"))
            row = {k: v for k, v in prof.to_dict().items() if k != "machine"}
            an.write_csv([row], os.path.join(tmp, "timing.csv"), list(row))
        elif kind == "intervals":
            if args.spec:
                records = generate_synthetic(_synthetic_spec(args.spec)).records
            else:
                records, _ = _load_records(args.input, args.format, 0.01)
            datasets = {t: build_dataset(records, PipelineConfig(t)) for t in TIMESCALES}
            results = an.interval_comparison(datasets, args.k, args.d, args.seed, args.sampler,
                                             workers=workers)
            _write_reports(tmp, "intervals", results, "timescale",
                           {"datasets": {t: ds.summary() for t, ds in datasets.items()}})
        elif kind == "synth":
            spec = _synthetic_spec(args.spec)
            corpus = generate_synthetic(spec)
            dataset = build_dataset(corpus.records, PipelineConfig("daily"))
            an.write_json({"spec": spec.to_dict(), "ledger": corpus.ledger,
                           "dataset": dataset.summary()}, os.path.join(tmp, "corpus.json"))
            results = an.sweep_d(dataset, (1, 2, 3), args.sampler, args.k, args.seed,
                                 workers=workers)
            _write_reports(tmp, "sweep_d", results, "d")
            errors = an.sweep_k(dataset, 1, args.k_values, args.seed, args.sampler,
                                workers=workers)
            an.write_csv([{"k": k, "error_rate": e} for k, e in errors.items()],
                         os.path.join(tmp, "sweep_k.csv"), ["k", "error_rate"])
            users, matrix = an.jaccard_matrix(dataset, min(args.top, dataset.user_count))
            cols, rows = an.matrix_rows(users, matrix)
            an.write_csv(rows, os.path.join(tmp, "jaccard.csv"), cols)
    print(os.path.join(root, name))
    return EXIT_OK


def _csv_ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tulbench", description="Trajectory-user linking benchmark pipeline.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("--threads", type=int, default=None,
                   help="parallel query workers (default: all cores)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    formats = sorted(SCHEMAS)

    ing = sub.add_parser("ingest", help="summarize a raw check-in file")
    ing.add_argument("file")
    ing.add_argument("--format", choices=formats, default="canonical")
    ing.add_argument("--max-reject", type=float, default=0.01,
                     help="tolerated share of malformed lines (default 0.01)")
    ing.add_argument("--json", help="also write the summary to this path")
    ing.set_defaults(func=cmd_ingest)

    pre = sub.add_parser("preprocess", help="segment, filter and relabel a raw file")
    pre.add_argument("file")
    pre.add_argument("--format", choices=formats, default="canonical")
    pre.add_argument("--timescale", choices=TIMESCALES, default="daily")
    pre.add_argument("--min-checkins", type=int, help="default 3/5/10 by timescale")
    pre.add_argument("--min-trajs", type=int, default=10)
    pre.add_argument("--relabel-order", choices=("user_time", "user_venue_time"),
                     default="user_time")
    pre.add_argument("--max-reject", type=float, default=0.01)
    pre.add_argument("--out", required=True, help="output prefix; writes PREFIX.tsv and PREFIX.json")
    pre.set_defaults(func=cmd_preprocess)

    run = sub.add_parser("run", help="cross-validate one configuration")
    run.add_argument("--config", help="JSON experiment config; flags override it")
    run.add_argument("--dataset", help="raw file, or saved dataset prefix with --format preprocessed")
    run.add_argument("--format", choices=formats + [PREPROCESSED])
    run.add_argument("--timescale", choices=TIMESCALES)
    run.add_argument("--min-checkins", type=int)
    run.add_argument("--min-trajs", type=int)
    run.add_argument("-d", type=int)
    run.add_argument("--sampler", choices=[s.value for s in Sampler])
    run.add_argument("-k", type=int)
    run.add_argument("--acc-at", type=_csv_ints, help="ranks for ACC@K, e.g. 1,5")
    run.add_argument("--folds", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--users", type=int, help="keep only the top-N most active users")
    run.add_argument("--metric", choices=("euclidean", "jaccard"))
    run.add_argument("--out", help=f"output root (default ${OUTPUT_ROOT_ENV} or ./results)")
    run.add_argument("--name", help="experiment directory name")
    run.set_defaults(func=cmd_run)

    ana = sub.add_parser("analyze", help="sweeps, uniqueness and timing analyses")
    ana.add_argument("kind", choices=("sweep-k", "sweep-d", "jaccard", "uniqueness", "venues",
                                      "intervals", "scaling", "timing", "synth"))
    ana.add_argument("--dataset", help="saved dataset prefix")
    ana.add_argument("--input", help="raw check-in file (preprocessed on the fly)")
    ana.add_argument("--format", choices=formats, default="canonical")
    ana.add_argument("--timescale", choices=TIMESCALES, default="daily")
    ana.add_argument("--min-checkins", type=int)
    ana.add_argument("--min-trajs", type=int, default=10)
    ana.add_argument("--spec", help="synthetic corpus spec (JSON) for synth/intervals")
    ana.add_argument("-d", type=int, default=1)
    ana.add_argument("-k", type=int, default=3)
    ana.add_argument("--sampler", choices=[s.value for s in Sampler], default="max")
    ana.add_argument("--seed", type=int, required=True)
    ana.add_argument("--top", type=int, default=25, help="users for jaccard/uniqueness/venues")
    ana.add_argument("--selection", choices=("first", "top"), default="first")
    ana.add_argument("--k-values", type=_csv_ints, default=[1, 3, 5, 7, 9, 11, 13, 15])
    ana.add_argument("--d-values", type=_csv_ints, default=[1, 2, 3])
    ana.add_argument("--user-counts", type=_csv_ints, default=None)
    ana.add_argument("--out", help=f"output root (default ${OUTPUT_ROOT_ENV} or ./results)")
    ana.add_argument("--name", help="output directory name (default: the analysis kind)")
    ana.set_defaults(func=cmd_analyze)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("tulbench: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.setLevel(logging.INFO)
    logger.addHandler(console)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tulbench: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestError as exc:
        print(f"tulbench: ingest error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except OSError as exc:
        print(f"tulbench: ingest error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except Exception as exc:  # noqa: BLE001 - map anything else to the runtime exit code
        logger.debug("runtime failure", exc_info=True)
        print(f"tulbench: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        logger.removeHandler(console)


if __name__ == "__main__":
    sys.exit(main())
