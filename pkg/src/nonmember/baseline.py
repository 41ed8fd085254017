"""Allowed-inference baselines from non-members.

Non-members are removed from the original data, an analysis is fit on
the remainder (the baseline dataset), and its predictions of the
non-members' secrets are scored. Relaxed mode removes all non-members and
fits once; complete mode refits once per removed individual.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import metrics
from .data import Dataset, Encoder, replicate, split_members
from .learners import (
    LearnerError,
    OptimizerSettings,
    best_of,
    fit_lasso,
    fit_logistic_l1,
    fit_majority,
    fit_nearest_neighbor,
    threshold_predict,
    validation_precision,
)
from .metrics import Counts

log = logging.getLogger(__name__)

RELAXED = "relaxed"
COMPLETE = "complete"
LEARNERS = ("auto", "logistic", "majority", "lasso", "nearest_neighbor")


class BaselineError(RuntimeError):
    pass


@dataclass(frozen=True)
class ConditionKey:
    """Analysis conditions: what the attacker knows and what is predicted.

    ``knowledge`` is a free-form label carried into reports (for example
    ``all_but_secret`` or ``pii_only``).
    """

    known: tuple[str, ...]
    secret: str
    secret_value: str | None = None
    epsilon: float | None = None
    knowledge: str = "custom"

    def __post_init__(self) -> None:
        object.__setattr__(self, "known", tuple(sorted(set(self.known))))
        if not self.known:
            raise ValueError("condition needs at least one known attribute")
        if self.secret in self.known:
            raise ValueError(f"secret {self.secret!r} is also a known attribute")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def validate(self, d: Dataset) -> None:
        for name in (*self.known, self.secret):
            try:
                d.spec(name)
            except KeyError:
                raise ValueError(f"condition refers to unknown column {name!r}") from None
        spec = d.spec(self.secret)
        if spec.is_categorical:
            if self.epsilon is not None:
                raise ValueError(f"epsilon given for categorical secret {self.secret!r}")
        else:
            if self.epsilon is None:
                raise ValueError(f"continuous secret {self.secret!r} needs an epsilon")
            if self.secret_value is not None:
                raise ValueError("secret_value only applies to categorical secrets")

    def to_dict(self) -> dict:
        return {
            "known": list(self.known),
            "secret": self.secret,
            "secret_value": self.secret_value,
            "epsilon": self.epsilon,
            "knowledge": self.knowledge,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ConditionKey":
        return cls(
            tuple(doc["known"]),
            doc["secret"],
            doc.get("secret_value"),
            doc.get("epsilon"),
            doc.get("knowledge", "custom"),
        )


@dataclass(frozen=True)
class LearnerConfig:
    name: str = "auto"
    C: float = 0.01
    alpha: float = 0.1
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    validation_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.name not in LEARNERS:
            raise ValueError(f"unknown learner {self.name!r}; choose from {LEARNERS}")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "C": self.C,
            "alpha": self.alpha,
            "optimizer": asdict(self.optimizer),
            "validation_fraction": self.validation_fraction,
        }

    @classmethod
    def from_dict(cls, doc: dict | str | None) -> "LearnerConfig":
        if doc is None:
            return cls()
        if isinstance(doc, str):
            return cls(name=doc)
        doc = dict(doc)
        opt = OptimizerSettings.from_mapping(doc.pop("optimizer", None))
        return cls(optimizer=opt, **doc)


@dataclass(frozen=True)
class BaselineResult:
    condition: ConditionKey
    p_base: float
    coverage_base: float | None
    coverage_kind: str  # "prediction_rate" (|P|/|T|) or "recall" (per-value conditions)
    analysis_descriptor: dict
    n_targets: int
    counts: Counts
    mode: str = RELAXED
    seed: int | None = None
    flagged_non_members: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "condition": self.condition.to_dict(),
            "p_base": self.p_base,
            "coverage_base": self.coverage_base,
            "coverage_kind": self.coverage_kind,
            "analysis": self.analysis_descriptor,
            "n_targets": self.n_targets,
            "counts": self.counts.to_dict(),
            "mode": self.mode,
            "seed": self.seed,
            "flagged_non_members": list(self.flagged_non_members),
        }


@dataclass(frozen=True)
class SweepPoint:
    p_thresh: float
    p_base: float | None  # None: every target abstained
    prediction_rate: float
    counts: Counts

    def to_dict(self) -> dict:
        return {
            "p_thresh": self.p_thresh,
            "precision": self.p_base,
            "prediction_rate": self.prediction_rate,
            "counts": self.counts.to_dict(),
        }


# -- analysis fitting ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Analysis:
    encoder: Encoder
    model: object
    descriptor: dict

    def predict(self, targets: Dataset, p_thresh: float = 0.0) -> tuple[np.ndarray, np.ndarray | None]:
        X = self.encoder.transform(targets)
        if self.encoder.secret_kind == "continuous":
            return self.model.predict(X), None
        return threshold_predict(self.model, X, p_thresh)


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def default_non_member_count(n: int) -> int:
    """30% of rows, rounded up (3039 of 10127)."""
    return max(1, min(n - 1, math.ceil(0.3 * n)))


def fit_analysis(train: Dataset, condition: ConditionKey, cfg: LearnerConfig, seed: int) -> Analysis:
    """Fit the configured learner on ``train`` for ``condition``."""
    enc = Encoder.fit(train, condition.known, condition.secret)
    X = enc.transform(train)
    y = enc.target(train)
    desc = cfg.to_dict()
    continuous = enc.secret_kind == "continuous"
    name = cfg.name
    try:
        if name == "nearest_neighbor":
            model = fit_nearest_neighbor(X, y, train.row_ids)
        elif continuous:
            if name not in ("auto", "lasso"):
                raise LearnerError(f"learner {name!r} cannot predict continuous secret {condition.secret!r}")
            model = fit_lasso(X, y, cfg.alpha, cfg.optimizer)
        elif name == "lasso":
            raise LearnerError(f"lasso cannot predict categorical secret {condition.secret!r}")
        elif name == "majority" or len(enc.classes) < 2:
            model = fit_majority(y)
        elif name == "logistic":
            model = fit_logistic_l1(X, y, cfg.C, cfg.optimizer)
        else:
            model, desc = _auto_categorical(X, y, cfg, seed, desc)
    except LearnerError as exc:
        raise BaselineError(f"fitting {name!r} for secret {condition.secret!r} failed: {exc}") from exc
    desc["selected"] = model.learner
    if getattr(model, "converged", True) is False:
        desc["converged"] = False
    return Analysis(enc, model, desc)


def _auto_categorical(X, y, cfg: LearnerConfig, seed: int, desc: dict):
    """Pick majority vs logistic on a held-out slice, then refit the winner."""
    n = X.design.shape[0]
    rng = np.random.default_rng(_derive_seed(seed, 1))
    n_val = max(1, int(round(cfg.validation_fraction * n)))
    if n - n_val < 2:
        return fit_majority(y), desc
    perm = rng.permutation(n)
    val, fit = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    Xf, yf = X.design[fit], y[fit]
    Xv, yv = X.design[val], y[val]
    majority = fit_majority(yf)
    candidates = [majority]
    if len(set(yf.tolist())) >= 2:
        candidates.append(fit_logistic_l1(Xf, yf, cfg.C, cfg.optimizer))
    winner = best_of(candidates, (Xv, yv))
    desc = dict(desc, validation_precision={m.learner: validation_precision(m, Xv, yv) for m in candidates})
    if winner.learner == "majority":
        return fit_majority(y), desc
    return fit_logistic_l1(X, y, cfg.C, cfg.optimizer), desc


# -- scoring ------------------------------------------------------------------


def score(condition: ConditionKey, predicted: Sequence, truths: Sequence) -> Counts:
    """Tally predictions against truths under ``condition``.

    ``None`` predictions are abstentions. A ``secret_value`` condition casts
    the problem as value / not-value, so ``fn`` is filled and coverage is
    recall for that value.
    """
    tp = fp = fn = np_ = 0
    v = condition.secret_value
    for p, t in zip(predicted, truths):
        if v is not None:
            if p == v:
                tp += t == v
                fp += t != v
            else:
                fn += t == v
                np_ += p is None
            continue
        if p is None:
            np_ += 1
        elif condition.epsilon is not None:
            ok = metrics.correct_continuous(float(p), float(t), condition.epsilon)
            tp += ok
            fp += not ok
        elif p == t:
            tp += 1
        else:
            fp += 1
    return Counts(tp=tp, fp=fp, fn=fn, np=np_)


def coverage_of(condition: ConditionKey, counts: Counts) -> tuple[float | None, str]:
    if condition.secret_value is not None:
        try:
            return metrics.recall(counts), "recall"
        except metrics.UndefinedMeasureError:
            return None, "recall"
    return metrics.predicted_fraction(counts), "prediction_rate"


def _result(condition, counts, n_targets, descriptor, mode, seed, flagged=()) -> BaselineResult:
    try:
        p = metrics.precision(counts)
    except metrics.UndefinedPrecisionError:
        raise metrics.UndefinedPrecisionError(
            f"baseline precision undefined for secret {condition.secret!r}: no predictions made"
        ) from None
    cov, kind = coverage_of(condition, counts)
    return BaselineResult(condition, p, cov, kind, descriptor, n_targets, counts, mode, seed, tuple(flagged))


# -- public operations --------------------------------------------------------


def predict_against(
    analysis_set: Dataset,
    targets: Dataset,
    condition: ConditionKey,
    learner_cfg: LearnerConfig | None = None,
    seed: int = 0,
    p_thresh: float = 0.0,
) -> tuple[Analysis, np.ndarray]:
    """Fit on ``analysis_set`` and predict each target's secret (``None`` = abstain)."""
    learner_cfg = learner_cfg or LearnerConfig()
    condition.validate(analysis_set)
    condition.validate(targets)
    if len(analysis_set) == 0:
        raise BaselineError("no rows left to fit the analysis on")
    analysis = fit_analysis(analysis_set, condition, learner_cfg, seed)
    values, _ = analysis.predict(targets, p_thresh)
    return analysis, values


def baseline_against(
    analysis_set: Dataset,
    targets: Dataset,
    condition: ConditionKey,
    learner_cfg: LearnerConfig | None = None,
    seed: int = 0,
    *,
    mode: str = RELAXED,
) -> BaselineResult:
    """Baseline predicted from ``analysis_set``, which may be an anonymized dataset."""
    analysis, values = predict_against(analysis_set, targets, condition, learner_cfg, seed)
    counts = score(condition, values.tolist(), targets.column(condition.secret).tolist())
    return _result(condition, counts, len(targets), analysis.descriptor, mode, seed)


def compute_baseline(
    original: Dataset,
    condition: ConditionKey,
    learner_cfg: LearnerConfig | None = None,
    mode: str = RELAXED,
    non_member_count: int | None = None,
    seed: int = 0,
    *,
    budget: int = 500,
    duplicate_tau: float | None = None,
) -> BaselineResult:
    learner_cfg = learner_cfg or LearnerConfig()
    condition.validate(original)
    count = default_non_member_count(len(original)) if non_member_count is None else non_member_count
    members, non_members = split_members(original, count, seed)
    flagged: tuple[int, ...] = ()
    if duplicate_tau is not None:
        flagged = near_duplicate_scan(members, non_members, condition.known, duplicate_tau)

    if mode == RELAXED:
        res = baseline_against(members, non_members, condition, learner_cfg, seed, mode=RELAXED)
        return replace(res, flagged_non_members=flagged)
    if mode != COMPLETE:
        raise ValueError(f"unknown mode {mode!r}")

    ids = non_members.row_ids
    if len(ids) > budget:
        rng = np.random.default_rng(_derive_seed(seed, 2))
        ids = np.sort(rng.choice(ids, size=budget, replace=False))
        log.info("complete mode: subsampled %d of %d non-members", budget, len(non_members))
    counts = Counts()
    descriptor = None
    selected: dict[str, int] = {}
    for task, rid in enumerate(ids.tolist()):
        target = original.take(original.positions([rid]))
        train = original.without_ids([rid])
        analysis, values = predict_against(train, target, condition, learner_cfg, _derive_seed(seed, 3, task))
        counts = counts + score(condition, values.tolist(), target.column(condition.secret).tolist())
        descriptor = descriptor or analysis.descriptor
        sel = analysis.descriptor["selected"]
        selected[sel] = selected.get(sel, 0) + 1
    descriptor = dict(descriptor, selected_counts=dict(sorted(selected.items())), fits=len(ids))
    descriptor.pop("validation_precision", None)
    return _result(condition, counts, len(ids), descriptor, COMPLETE, seed, flagged)


def threshold_sweep(
    original: Dataset,
    condition: ConditionKey,
    thresholds: Iterable[float],
    learner_cfg: LearnerConfig | None = None,
    non_member_count: int | None = None,
    seed: int = 0,
) -> list[SweepPoint]:
    """Precision vs prediction rate over abstention thresholds on one fitted model.

    The same split as relaxed :func:`compute_baseline` is used. Under the
    ``auto`` learner the sweep runs on the logistic model (majority when the
    baseline dataset holds a single class), since the majority vote has a
    constant ``p_max``.
    """
    learner_cfg = learner_cfg or LearnerConfig()
    condition.validate(original)
    if not original.spec(condition.secret).is_categorical:
        raise ValueError(f"threshold sweeps need a categorical secret, {condition.secret!r} is continuous")
    thresholds = [float(t) for t in thresholds]
    for t in thresholds:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"threshold {t} outside [0, 1]")
    count = default_non_member_count(len(original)) if non_member_count is None else non_member_count
    members, non_members = split_members(original, count, seed)
    cfg = learner_cfg
    if cfg.name == "auto":
        cfg = LearnerConfig("logistic", cfg.C, cfg.alpha, cfg.optimizer, cfg.validation_fraction)
    analysis = fit_analysis(members, condition, cfg, seed)
    X = analysis.encoder.transform(non_members)
    truths = non_members.column(condition.secret).tolist()
    points = []
    for t in thresholds:
        values, _ = threshold_predict(analysis.model, X, t)
        counts = score(condition, values.tolist(), truths)
        try:
            p = metrics.precision(counts)
        except metrics.UndefinedPrecisionError:
            p = None
        cov, _ = coverage_of(condition, counts)
        points.append(SweepPoint(t, p, cov if cov is not None else 0.0, counts))
    return points


def near_duplicate_scan(members: Dataset, non_members: Dataset, known: Iterable[str], tau: float) -> tuple[int, ...]:
    """Row ids of non-members whose nearest member is closer than ``tau``.

    Distance is Euclidean over the encoded known attributes divided by the
    square root of the feature count. Flagged rows are reported, not removed.
    """
    known = tuple(known)
    proxy = next(n for n in members.names if n not in known)
    enc = Encoder.fit(members, known, proxy)
    Xm = enc.transform(members).design
    Xn = enc.transform(non_members).design
    nn = fit_nearest_neighbor(Xm, np.zeros(len(members)), members.row_ids)
    idx = nn.nearest(Xn)
    dist = np.sqrt(((Xn - nn.X[idx]) ** 2).sum(axis=1) / max(1, Xm.shape[1]))
    return tuple(int(r) for r in non_members.row_ids[dist < tau])


# -- replication study --------------------------------------------------------


@dataclass(frozen=True)
class ReplicationRow:
    fraction: float
    condition: ConditionKey
    learner: str
    p_base: float
    delta: float
    flagged: bool
    counts: Counts

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "secret": self.condition.secret,
            "knowledge": self.condition.knowledge,
            "learner": self.learner,
            "p_base": self.p_base,
            "delta": self.delta,
            "flagged": self.flagged,
            "counts": self.counts.to_dict(),
        }


def replication_study(
    original: Dataset,
    fractions: Sequence[float],
    conditions: Sequence[ConditionKey],
    learner_cfgs: Sequence[LearnerConfig],
    seed: int = 0,
    *,
    non_member_count: int | None = None,
    flag_threshold: float = 0.05,
) -> list[ReplicationRow]:
    """Baseline sensitivity to duplicated records.

    Non-members are drawn once from the original rows with the same split
    as :func:`compute_baseline`. Each fraction replicates the original data,
    then removes only the non-members' original rows, so their duplicates
    stay in the baseline dataset as dependent members.
    """
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"fraction {f} outside [0, 1]")
    count = default_non_member_count(len(original)) if non_member_count is None else non_member_count
    _, non_members = split_members(original, count, seed)
    reference: dict[tuple[int, int], float] = {}
    rows = []
    all_fractions = [0.0] + [f for f in fractions if f != 0.0]
    for f in all_fractions:
        replicated = replicate(original, f, _derive_seed(seed, 4))
        baseline_set = replicated.without_ids(non_members.row_ids)
        for ci, cond in enumerate(conditions):
            for li, cfg in enumerate(learner_cfgs):
                res = baseline_against(baseline_set, non_members, cond, cfg, seed)
                if f == 0.0:
                    reference[(ci, li)] = res.p_base
                delta = res.p_base - reference[(ci, li)]
                if f in fractions:
                    rows.append(ReplicationRow(f, cond, cfg.name, res.p_base, delta, abs(delta) > flag_threshold, res.counts))
    order = {f: i for i, f in enumerate(fractions)}
    rows.sort(key=lambda r: order[r.fraction])
    return rows
