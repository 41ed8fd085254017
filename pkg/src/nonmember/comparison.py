"""Coverage-matched comparison of attack predictions against the baseline.

Coverage for both sides is ``|P| / |T|``: the attack's predicted targets
over all its targets. The baseline is then measured on exactly the
targets in ``P``, each treated as a non-member, and Precision Improvement
is reported.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .baseline import COMPLETE, RELAXED, ConditionKey, LearnerConfig, _derive_seed, predict_against, score
from .data import Dataset
from .learners import Prediction

log = logging.getLogger(__name__)

OK = "ok"
NO_PREDICTION = "no_prediction"
BASELINE_PERFECT = "baseline_already_perfect"


class SubmissionError(ValueError):
    pass


@dataclass(frozen=True)
class AttackSubmission:
    condition: ConditionKey
    target_ids: tuple[int, ...]
    predictions: tuple[Prediction, ...]
    attack_name: str = "attack"

    def __post_init__(self) -> None:
        targets = set(self.target_ids)
        if len(targets) != len(self.target_ids):
            raise SubmissionError("duplicate target ids")
        seen = set()
        for p in self.predictions:
            if p.target_row_id not in targets:
                raise SubmissionError(f"prediction for id {p.target_row_id} outside the target set")
            if p.target_row_id in seen:
                raise SubmissionError(f"more than one prediction for id {p.target_row_id}")
            seen.add(p.target_row_id)

    @classmethod
    def from_predictions(cls, condition: ConditionKey, predictions: Sequence[Prediction], attack_name: str = "attack"):
        """Target set taken as every id the predictions mention."""
        return cls(condition, tuple(p.target_row_id for p in predictions), tuple(predictions), attack_name)

    def predicted(self) -> list[Prediction]:
        """The non-abstained predictions, restricted to ``secret_value`` if the condition has one."""
        v = self.condition.secret_value
        return [p for p in self.predictions if not p.abstained and (v is None or p.value == v)]


@dataclass(frozen=True)
class ComparisonReport:
    attack_name: str
    condition: ConditionKey
    status: str
    p_atk: float | None
    c_atk: float
    p_base: float | None
    c_base: float
    pi: float | None
    n_targets: int
    n_predicted: int
    attack_counts: metrics.Counts
    baseline_counts: metrics.Counts | None
    baseline_descriptor: dict | None
    predicted_ids: tuple[int, ...] = ()
    baseline_scored_ids: tuple[int, ...] = ()
    coverage_kind: str = "prediction_rate"
    baseline_predictions: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "attack_name": self.attack_name,
            "condition": self.condition.to_dict(),
            "status": self.status,
            "p_atk": self.p_atk,
            "c_atk": self.c_atk,
            "p_base": self.p_base,
            "c_base": self.c_base,
            "pi": self.pi,
            "coverage_kind": self.coverage_kind,
            "n_targets": self.n_targets,
            "n_predicted": self.n_predicted,
            "attack_counts": self.attack_counts.to_dict(),
            "baseline_counts": None if self.baseline_counts is None else self.baseline_counts.to_dict(),
            "baseline": self.baseline_descriptor,
        }


@dataclass(frozen=True)
class ComparisonFailure:
    attack_name: str
    error: str

    status = "error"

    def to_dict(self) -> dict:
        return {"attack_name": self.attack_name, "status": self.status, "error": self.error}


def ingest_attack(path: str | Path, original: Dataset, condition: ConditionKey, attack_name: str | None = None) -> AttackSubmission:
    """Read a ``target_id,prediction`` CSV; an empty prediction is an abstention."""
    path = Path(path)
    condition.validate(original)
    continuous = not original.spec(condition.secret).is_categorical
    known_ids = set(original.row_ids.tolist())
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["target_id", "prediction"]:
            raise SubmissionError(f"{path}: header must be 'target_id,prediction', got {header}")
        ids: list[int] = []
        preds: list[Prediction] = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise SubmissionError(f"{path}:{lineno}: expected 2 fields, got {len(rec)}")
            try:
                rid = int(rec[0])
            except ValueError:
                raise SubmissionError(f"{path}:{lineno}: bad target id {rec[0]!r}") from None
            if rid not in known_ids:
                raise SubmissionError(f"{path}:{lineno}: unknown target id {rid}")
            if rid in ids:
                raise SubmissionError(f"{path}:{lineno}: duplicate target id {rid}")
            ids.append(rid)
            raw = rec[1]
            if raw == "":
                value = None
            elif continuous:
                try:
                    value = float(raw)
                except ValueError:
                    raise SubmissionError(
                        f"{path}:{lineno}: non-numeric prediction {raw!r} for continuous secret {condition.secret!r}"
                    ) from None
                if not np.isfinite(value):
                    raise SubmissionError(f"{path}:{lineno}: non-finite prediction")
            else:
                value = raw
            preds.append(Prediction(rid, value))
    return AttackSubmission(condition, tuple(ids), tuple(preds), attack_name or path.stem)


def write_attack(path: str | Path, predictions: Sequence[Prediction]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target_id", "prediction"])
        for p in predictions:
            w.writerow([p.target_row_id, "" if p.value is None else (repr(p.value) if isinstance(p.value, float) else p.value)])


class BaselineCache:
    """Write-once store of baseline predictions keyed by condition and target set."""

    def __init__(self) -> None:
        self._store: dict = {}
        self.fits = 0

    def get_or_compute(self, key, compute):
        if key not in self._store:
            self._store[key] = compute()
            self.fits += 1
        return self._store[key]


def _baseline_predictions(original, condition, ids, cfg, seed, mode) -> tuple[dict, dict]:
    """Baseline prediction for each id, all treated as non-members."""
    if mode == RELAXED:
        targets = original.take(original.positions(ids))
        analysis, values = predict_against(original.without_ids(ids), targets, condition, cfg, seed)
        return dict(zip(ids, values.tolist())), analysis.descriptor
    if mode != COMPLETE:
        raise ValueError(f"unknown mode {mode!r}")
    out, desc = {}, None
    for task, rid in enumerate(ids):
        target = original.take(original.positions([rid]))
        analysis, values = predict_against(original.without_ids([rid]), target, condition, cfg, _derive_seed(seed, 3, task))
        out[rid] = values.tolist()[0]
        desc = desc or analysis.descriptor
    return out, desc


def compare(
    submission: AttackSubmission,
    original: Dataset,
    learner_cfg: LearnerConfig | None = None,
    seed: int = 0,
    *,
    mode: str = RELAXED,
    cache: BaselineCache | None = None,
) -> ComparisonReport:
    learner_cfg = learner_cfg or LearnerConfig()
    cond = submission.condition
    cond.validate(original)
    # baseline scoring uses plain correctness over the predicted targets
    plain = replace(cond, secret_value=None)
    predicted = submission.predicted()
    ids = sorted(p.target_row_id for p in predicted)
    n_t, n_p = len(submission.target_ids), len(ids)
    if n_t == 0:
        raise SubmissionError("empty target set")
    c_atk = n_p / n_t
    if not predicted:
        counts = metrics.Counts(np=n_t)
        return ComparisonReport(submission.attack_name, cond, NO_PREDICTION, None, 0.0, None, 0.0, None, n_t, 0, counts, None, None)

    by_id = {p.target_row_id: p.value for p in predicted}
    truths = original.column(cond.secret)[original.positions(ids)].tolist()
    atk = score(plain, [by_id[r] for r in ids], truths)
    atk = metrics.Counts(tp=atk.tp, fp=atk.fp, np=n_t - n_p)
    p_atk = metrics.precision(atk)

    key = (cond.known, cond.secret, cond.epsilon, tuple(ids), seed, mode, repr(learner_cfg))
    compute = lambda: _baseline_predictions(original, plain, ids, learner_cfg, seed, mode)  # noqa: E731
    base_pred, desc = cache.get_or_compute(key, compute) if cache else compute()
    scored = tuple(sorted(base_pred))
    if set(scored) != set(ids):
        raise RuntimeError("baseline was not scored on the attack's predicted targets")
    base = score(plain, [base_pred[r] for r in ids], truths)
    base = metrics.Counts(tp=base.tp, fp=base.fp, np=n_t - n_p)
    p_base = metrics.precision(base)
    c_base = metrics.predicted_fraction(base)

    try:
        pi = metrics.precision_improvement(p_atk, p_base)
        status = OK
    except metrics.SaturatedBaselineError:
        pi, status = None, BASELINE_PERFECT
    return ComparisonReport(
        submission.attack_name, cond, status, p_atk, c_atk, p_base, c_base, pi, n_t, n_p,
        atk, base, desc, tuple(ids), scored, baseline_predictions=base_pred,
    )


def batch_compare(
    submissions: Sequence,
    original: Dataset,
    learner_cfg: LearnerConfig | None = None,
    seed: int = 0,
    *,
    mode: str = RELAXED,
    cache: BaselineCache | None = None,
) -> list:
    """Compare each submission; failures become :class:`ComparisonFailure` entries.

    ``submissions`` may mix :class:`AttackSubmission` objects and
    exceptions raised while loading them, so ingest errors stay in order.
    """
    cache = cache if cache is not None else BaselineCache()
    out = []
    for i, sub in enumerate(submissions):
        if isinstance(sub, Exception):
            out.append(ComparisonFailure(getattr(sub, "attack_name", f"submission_{i}"), str(sub)))
            continue
        try:
            out.append(compare(sub, original, learner_cfg, seed, mode=mode, cache=cache))
        except Exception as exc:  # isolate per-submission failures
            log.warning("comparison %s failed: %s", sub.attack_name, exc)
            out.append(ComparisonFailure(sub.attack_name, f"{type(exc).__name__}: {exc}"))
    return out
