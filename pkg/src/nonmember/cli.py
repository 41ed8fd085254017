"""Batch command line: ``nonmember {baseline,sweep,compare,replicate,roc2pr}``.

Each run writes into ``<out>/<command>-<config hash>/`` (suffixed when the
directory already exists, so nothing is overwritten). ``run.json`` holds
the resolved configuration and a ``created_at`` timestamp; every other
file is a pure function of the configuration.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import __version__
from .baseline import (
    COMPLETE,
    RELAXED,
    ConditionKey,
    LearnerConfig,
    compute_baseline,
    default_non_member_count,
    replication_study,
    threshold_sweep,
)
from .comparison import ComparisonFailure, SubmissionError, batch_compare, ingest_attack
from .data import DataError, Dataset, load_csv, load_schema, schema_from_mapping
from .membership import DEFAULT_SKEWS, RocError, bundled_fixture, load_roc, pr_tables, write_pr_csv
from .metrics import SkewScenario

log = logging.getLogger("nonmember")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
DEFAULT_THRESHOLDS = (0.0, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
DEFAULT_FRACTIONS = (0.0, 0.1, 0.5, 1.0)
KNOWLEDGE_SETS = ("all_but_secret", "pii_only")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str | None
    schema: str | None = None
    ignore_extra_columns: bool = False
    seed: int | None = None
    mode: str = RELAXED
    non_member_count: int | None = None
    non_member_fraction: float | None = None
    complete_budget: int = 500
    duplicate_tau: float | None = None
    epsilon: float = 0.05
    conditions: list = field(default_factory=list)
    learner: dict | str | None = None
    learners: list | None = None
    thresholds: list = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    fractions: list = field(default_factory=lambda: list(DEFAULT_FRACTIONS))
    skews: list = field(default_factory=lambda: [s.label() for s in DEFAULT_SKEWS])
    attacks: list = field(default_factory=list)
    roc_files: list = field(default_factory=list)
    bundled: bool = False

    @classmethod
    def from_mapping(cls, doc: dict, base: Path) -> "RunConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__) - {"out"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        doc.pop("out", None)
        cfg = cls(**{"dataset": None, **doc})
        resolve = lambda p: str((base / p).resolve()) if p and not Path(p).is_absolute() else p  # noqa: E731
        cfg.dataset = resolve(cfg.dataset)
        if cfg.schema and cfg.schema != "bankchurners":
            cfg.schema = resolve(cfg.schema)
        cfg.roc_files = [resolve(p) for p in cfg.roc_files]
        cfg.attacks = [dict(a, path=resolve(a["path"])) if isinstance(a, dict) else resolve(a) for a in cfg.attacks]
        return cfg

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def digest(self, command: str) -> str:
        blob = json.dumps({"command": command, "config": self.to_dict()}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    # -- validation helpers --------------------------------------------------

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is required (config 'seed' or --seed)")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        return self.seed

    def learner_config(self) -> LearnerConfig:
        try:
            return LearnerConfig.from_dict(self.learner)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad learner settings: {exc}") from None

    def load_dataset(self) -> Dataset:
        if not self.dataset:
            raise ConfigError("config has no 'dataset'")
        if not Path(self.dataset).is_file():
            raise ConfigError(f"dataset {self.dataset} does not exist")
        schema = None
        if self.schema == "bankchurners":
            text = resources.files("nonmember").joinpath("schemas/bankchurners.json").read_text(encoding="utf-8")
            schema = schema_from_mapping(json.loads(text))
        elif self.schema:
            if not Path(self.schema).is_file():
                raise ConfigError(f"schema {self.schema} does not exist")
            schema = load_schema(self.schema)
        return load_csv(self.dataset, schema, ignore_extra=self.ignore_extra_columns)

    def non_members(self, d: Dataset) -> int:
        if self.non_member_count is not None:
            return int(self.non_member_count)
        if self.non_member_fraction is not None:
            return max(1, round(self.non_member_fraction * len(d)))
        return default_non_member_count(len(d))

    def condition_keys(self, d: Dataset) -> list[ConditionKey]:
        if not self.conditions:
            raise ConfigError("conditions list is empty")
        keys = []
        for entry in self.conditions:
            keys.extend(expand_condition(entry, d, self.epsilon))
        if not keys:
            raise ConfigError("conditions expand to nothing")
        return keys


def expand_condition(entry: dict, d: Dataset, default_eps: float) -> list[ConditionKey]:
    """Turn one config entry into condition keys.

    ``secret`` names one column, ``secrets`` a list or ``"all"``. ``known``
    is a column list or one of ``all_but_secret`` / ``pii_only``;
    ``knowledge`` lists several of those labels.
    """
    if not isinstance(entry, dict):
        raise ConfigError(f"condition entries must be mappings, got {entry!r}")
    secrets = entry.get("secrets", [entry["secret"]] if "secret" in entry else None)
    if secrets is None:
        raise ConfigError(f"condition {entry} names no secret")
    if secrets == "all":
        secrets = d.names
    knowledge = entry.get("knowledge", [entry.get("known", "all_but_secret")])
    if isinstance(knowledge, str):
        knowledge = [knowledge]
    out = []
    for secret in secrets:
        try:
            spec = d.spec(secret)
        except KeyError:
            raise ConfigError(f"unknown secret column {secret!r}") from None
        for know in knowledge:
            if know == "all_but_secret":
                known, label = [n for n in d.names if n != secret], know
            elif know == "pii_only":
                known, label = [n for n in d.pii_columns() if n != secret], know
            elif isinstance(know, (list, tuple)):
                known, label = list(know), entry.get("label", "custom")
            else:
                raise ConfigError(f"unknown knowledge set {know!r}")
            eps = None if spec.is_categorical else float(entry.get("epsilon", default_eps))
            try:
                key = ConditionKey(tuple(known), secret, entry.get("secret_value"), eps, label)
                key.validate(d)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            out.append(key)
    return out


# -- output -------------------------------------------------------------------


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n", encoding="utf-8")


def _cell(v):
    if v is None:
        return "undefined"
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def run_dir(out: Path, command: str, cfg: RunConfig) -> Path:
    base = out / f"{command}-{cfg.digest(command)}"
    target, i = base, 1
    while target.exists():
        i += 1
        target = base.with_name(f"{base.name}-{i}")
    target.mkdir(parents=True)
    return target


def write_run_manifest(directory: Path, command: str, cfg: RunConfig, files: list[str]) -> None:
    dump_json(
        {
            "command": command,
            "version": __version__,
            "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "files": sorted(files),
        },
        directory / "run.json",
    )


# -- commands -----------------------------------------------------------------


def cmd_baseline(cfg: RunConfig, out: Path, fmt: str) -> tuple[int, Path]:
    seed = cfg.require_seed()
    learner = cfg.learner_config()
    if cfg.mode not in (RELAXED, COMPLETE):
        raise ConfigError(f"mode must be relaxed or complete, got {cfg.mode!r}")
    d = cfg.load_dataset()
    conds = cfg.condition_keys(d)
    count = cfg.non_members(d)
    results = [
        compute_baseline(d, c, learner, cfg.mode, count, seed, budget=cfg.complete_budget, duplicate_tau=cfg.duplicate_tau)
        for c in conds
    ]
    directory = run_dir(out, "baseline", cfg)
    files = []
    if fmt in ("json", "both"):
        dump_json({"results": [r.to_dict() for r in results]}, directory / "baseline.json")
        files.append("baseline.json")
    if fmt in ("csv", "both"):
        rows = [
            (
                r.condition.secret,
                r.condition.knowledge,
                d.spec(r.condition.secret).kind,
                r.p_base,
                r.coverage_base,
                r.coverage_kind,
                r.analysis_descriptor.get("selected"),
                r.n_targets,
            )
            for r in results
        ]
        write_rows(
            directory / "baseline_summary.csv",
            ("secret", "knowledge", "secret_kind", "precision", "coverage", "coverage_kind", "learner", "n_targets"),
            rows,
        )
        files.append("baseline_summary.csv")
    write_run_manifest(directory, "baseline", cfg, files)
    return EXIT_OK, directory


def cmd_sweep(cfg: RunConfig, out: Path, fmt: str) -> tuple[int, Path]:
    seed = cfg.require_seed()
    learner = cfg.learner_config()
    d = cfg.load_dataset()
    conds = [c for c in cfg.condition_keys(d) if d.spec(c.secret).is_categorical]
    if not conds:
        raise ConfigError("threshold sweeps need at least one categorical secret")
    count = cfg.non_members(d)
    sweeps = [(c, threshold_sweep(d, c, cfg.thresholds, learner, count, seed)) for c in conds]
    directory = run_dir(out, "sweep", cfg)
    files = []
    if fmt in ("json", "both"):
        doc = [{"condition": c.to_dict(), "points": [p.to_dict() for p in pts]} for c, pts in sweeps]
        dump_json({"sweeps": doc}, directory / "sweep.json")
        files.append("sweep.json")
    if fmt in ("csv", "both"):
        rows = [(c.secret, c.knowledge, p.p_thresh, p.p_base, p.prediction_rate) for c, pts in sweeps for p in pts]
        write_rows(directory / "sweep.csv", ("secret", "knowledge", "p_thresh", "precision", "prediction_rate"), rows)
        files.append("sweep.csv")
    write_run_manifest(directory, "sweep", cfg, files)
    return EXIT_OK, directory


def cmd_compare(cfg: RunConfig, out: Path, fmt: str, attack_files: Sequence[str] = ()) -> tuple[int, Path]:
    seed = cfg.require_seed()
    learner = cfg.learner_config()
    d = cfg.load_dataset()
    jobs = []
    if attack_files:
        conds = cfg.condition_keys(d)
        if len(conds) != 1:
            raise ConfigError("attack files on the command line need exactly one configured condition")
        jobs.extend((str(Path(p).resolve()), conds[0], None) for p in attack_files)
    for entry in cfg.attacks:
        if isinstance(entry, str):
            conds = cfg.condition_keys(d)
            if len(conds) != 1:
                raise ConfigError("attack entries without their own condition need exactly one configured condition")
            jobs.append((entry, conds[0], None))
        else:
            conds = expand_condition(entry, d, cfg.epsilon)
            if len(conds) != 1:
                raise ConfigError(f"attack entry {entry} must describe exactly one condition")
            jobs.append((entry["path"], conds[0], entry.get("name")))
    if not jobs:
        raise ConfigError("no attack files given")

    subs, ingest_failed = [], set()
    for i, (path, cond, name) in enumerate(jobs):
        try:
            subs.append(ingest_attack(path, d, cond, name))
        except (SubmissionError, DataError, OSError) as exc:
            exc.attack_name = name or Path(path).stem
            subs.append(exc)
            ingest_failed.add(i)
    reports = batch_compare(subs, d, learner, seed, mode=cfg.mode)

    directory = run_dir(out, "compare", cfg)
    files = []
    if fmt in ("json", "both"):
        dump_json([r.to_dict() for r in reports], directory / "compare.json")
        files.append("compare.json")
    if fmt in ("csv", "both"):
        rows = []
        for r in reports:
            if isinstance(r, ComparisonFailure):
                rows.append((r.attack_name, None, r.status, None, None, None, None, None))
            else:
                rows.append((r.attack_name, r.condition.secret, r.status, r.p_atk, r.c_atk, r.p_base, r.pi, r.n_predicted))
        write_rows(directory / "compare.csv", ("attack", "secret", "status", "p_atk", "c_atk", "p_base", "pi", "n_predicted"), rows)
        files.append("compare.csv")
    write_run_manifest(directory, "compare", cfg, files)
    code = EXIT_OK
    for i, r in enumerate(reports):
        if isinstance(r, ComparisonFailure):
            code = max(code, EXIT_VALIDATION if i in ingest_failed else EXIT_RUNTIME)
    return code, directory


def cmd_replicate(cfg: RunConfig, out: Path, fmt: str) -> tuple[int, Path]:
    seed = cfg.require_seed()
    d = cfg.load_dataset()
    conds = cfg.condition_keys(d)
    try:
        learners = [LearnerConfig.from_dict(x) for x in (cfg.learners or [cfg.learner])]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad learner settings: {exc}") from None
    fractions = [float(f) for f in cfg.fractions]
    rows = replication_study(d, fractions, conds, learners, seed, non_member_count=cfg.non_members(d))
    directory = run_dir(out, "replicate", cfg)
    files = []
    if fmt in ("json", "both"):
        dump_json({"rows": [r.to_dict() for r in rows]}, directory / "replication.json")
        files.append("replication.json")
    if fmt in ("csv", "both"):
        write_rows(
            directory / "replication.csv",
            ("fraction", "secret", "knowledge", "learner", "precision", "delta", "flagged"),
            [(r.fraction, r.condition.secret, r.condition.knowledge, r.learner, r.p_base, r.delta, str(r.flagged).lower()) for r in rows],
        )
        files.append("replication.csv")
    write_run_manifest(directory, "replicate", cfg, files)
    return EXIT_OK, directory


def cmd_roc2pr(cfg: RunConfig, out: Path, fmt: str) -> tuple[int, Path]:
    try:
        skews = [SkewScenario.parse(s) if isinstance(s, str) else SkewScenario(*s) for s in cfg.skews]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad skew: {exc}") from None
    curves = list(bundled_fixture()) if cfg.bundled else []
    curves += [load_roc(p) for p in cfg.roc_files]
    if not curves:
        raise ConfigError("give ROC files or --bundled")
    tables = pr_tables(curves, skews)
    directory = run_dir(out, "roc2pr", cfg)
    files = []
    for t in tables:
        if fmt in ("csv", "both"):
            write_pr_csv(t, directory / f"pr_{t.curve}.csv")
            files.append(f"pr_{t.curve}.csv")
        if fmt in ("json", "both"):
            dump_json(t.records(), directory / f"pr_{t.curve}.json")
            files.append(f"pr_{t.curve}.json")
    write_run_manifest(directory, "roc2pr", cfg, files)
    return EXIT_OK, directory


COMMANDS = {
    "baseline": cmd_baseline,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "replicate": cmd_replicate,
    "roc2pr": cmd_roc2pr,
}


def read_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return {}, Path.cwd()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} does not exist")
    text = p.read_text(encoding="utf-8")
    try:
        if p.suffix.lower() in (".yaml", ".yml"):
            import yaml

            doc = yaml.safe_load(text) or {}
        else:
            doc = json.loads(text)
    except Exception as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    return doc, p.resolve().parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonmember", description="Allowed-inference baselines and base-rate-aware reporting.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="run configuration (JSON or YAML)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", default="runs", help="output root directory (default: runs)")
        p.add_argument("--format", choices=("json", "csv", "both"), default="both")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "compare":
            p.add_argument("attack_files", nargs="*", help="target_id,prediction CSV files")
        if name == "roc2pr":
            p.add_argument("roc_files", nargs="*", help="fpr,tpr CSV files")
            p.add_argument("--bundled", action="store_true", help="include the bundled Shokri/Carlini points")
            p.add_argument("--skews", help="comma-separated M:N ratios, e.g. 1:1,1:30,1:240")
    return parser


def _error(kind: str, exc: BaseException) -> None:
    print(json.dumps({"status": "error", "kind": kind, "error": type(exc).__name__, "message": str(exc)}))


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        doc, base = read_config(args.config)
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.command == "roc2pr":
            if args.bundled:
                doc["bundled"] = True
            if args.roc_files:
                doc["roc_files"] = list(doc.get("roc_files", [])) + [str(Path(p).resolve()) for p in args.roc_files]
            if args.skews:
                doc["skews"] = [s.strip() for s in args.skews.split(",") if s.strip()]
        cfg = RunConfig.from_mapping(doc, base)
        out = Path(args.out)
        if args.command == "compare":
            code, directory = cmd_compare(cfg, out, args.format, args.attack_files)
        else:
            code, directory = COMMANDS[args.command](cfg, out, args.format)
    except (ConfigError, DataError, RocError, SubmissionError, TypeError) as exc:
        _error("validation", exc)
        return EXIT_VALIDATION
    except Exception as exc:  # reported as machine-readable JSON
        log.debug("runtime failure", exc_info=True)
        _error("runtime", exc)
        return EXIT_RUNTIME
    print(json.dumps({"status": "ok" if code == EXIT_OK else "partial", "output": str(directory)}))
    return code


if __name__ == "__main__":
    sys.exit(main())
