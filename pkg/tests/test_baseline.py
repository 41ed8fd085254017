import numpy as np
import pytest

from nonmember import metrics
from nonmember.baseline import (
    COMPLETE,
    RELAXED,
    BaselineError,
    ConditionKey,
    LearnerConfig,
    baseline_against,
    compute_baseline,
    default_non_member_count,
    near_duplicate_scan,
    replication_study,
    threshold_sweep,
)
from nonmember.data import Dataset, split_members
from nonmember.synthetic import constant_secret_dataset, linear_dataset

from .conftest import modal_frequency


def test_default_count():
    assert default_non_member_count(10127) == 3039
    assert default_non_member_count(2) == 1


def test_condition_validation(parity):
    with pytest.raises(ValueError, match="also a known"):
        ConditionKey(("k", "parity"), "parity")
    with pytest.raises(ValueError, match="at least one"):
        ConditionKey((), "parity")
    with pytest.raises(ValueError, match="unknown column"):
        ConditionKey(("nope",), "parity").validate(parity)
    with pytest.raises(ValueError, match="epsilon"):
        ConditionKey(("k",), "noise_num").validate(parity)
    with pytest.raises(ValueError, match="epsilon"):
        ConditionKey(("k",), "parity", epsilon=0.1).validate(parity)
    c = ConditionKey(("noise_cat", "k"), "parity", knowledge="x")
    assert c.known == ("k", "noise_cat")
    assert ConditionKey.from_dict(c.to_dict()) == c
    with pytest.raises(ValueError):
        LearnerConfig("svm")


def test_constant_secret():
    d = constant_secret_dataset()
    res = compute_baseline(d, ConditionKey(("x", "c"), "secret"), seed=3)
    assert res.p_base == 1.0 and res.coverage_base == 1.0
    assert res.analysis_descriptor["selected"] == "majority"


def test_parity_relaxed(parity, parity_condition):
    res = compute_baseline(parity, parity_condition, seed=1)
    # functional dependence oracle: the true mapping k -> parity is exact
    nm = split_members(parity, default_non_member_count(len(parity)), 1)[1]
    truth = ["even" if int(k[1:]) % 2 == 0 else "odd" for k in nm.column("k").tolist()]
    assert truth == nm.column("parity").tolist()
    assert res.p_base >= 0.95
    assert res.n_targets == 600 and res.counts.attempts == 600


def test_independent_secret_tracks_modal_frequency(independent, independent_condition):
    res = compute_baseline(independent, independent_condition, seed=1)
    members, non_members = split_members(independent, default_non_member_count(2000), 1)
    assert abs(res.p_base - modal_frequency(members.column("secret"))) <= 0.03
    assert abs(res.p_base - modal_frequency(non_members.column("secret"))) <= 0.03


def test_relaxed_complete_agree(parity, parity_condition):
    relaxed = compute_baseline(parity, parity_condition, seed=2)
    complete = compute_baseline(parity, parity_condition, mode=COMPLETE, seed=2, budget=60)
    assert complete.mode == COMPLETE and complete.n_targets == 60
    assert complete.analysis_descriptor["fits"] == 60
    assert abs(relaxed.p_base - complete.p_base) <= 0.05


def test_counts_recompute_reported_measures(independent, independent_condition):
    res = compute_baseline(independent, independent_condition, seed=4)
    assert res.p_base == metrics.precision(res.counts)
    assert res.coverage_base == metrics.predicted_fraction(res.counts)
    assert res.coverage_kind == "prediction_rate"


def test_determinism(independent, independent_condition):
    a = compute_baseline(independent, independent_condition, seed=9).to_dict()
    b = compute_baseline(independent, independent_condition, seed=9).to_dict()
    assert a == b


def test_continuous_secret():
    d = linear_dataset(1000, seed=1)
    cond = ConditionKey(("x1", "x2", "g"), "y", epsilon=0.05)
    res = compute_baseline(d, cond, seed=1)
    assert res.analysis_descriptor["selected"] == "lasso"
    assert res.p_base > 0.95
    with pytest.raises(BaselineError):
        compute_baseline(d, cond, LearnerConfig("logistic"), seed=1)


def test_secret_value_casts_binary(parity):
    cond = ConditionKey(("k",), "parity", secret_value="even")
    res = compute_baseline(parity, cond, seed=1)
    assert res.coverage_kind == "recall"
    assert res.p_base == 1.0 and res.coverage_base == 1.0
    assert res.counts.fn == 0


# -- sweep ----------------------------------------------------------------------


def test_sweep_zero_threshold(parity, parity_condition):
    (pt,) = threshold_sweep(parity, parity_condition, [0.0], seed=1)
    assert pt.prediction_rate == 1.0


def test_sweep_high_threshold_on_parity(parity, parity_condition):
    pts = threshold_sweep(parity, parity_condition, [0.99], LearnerConfig("logistic", C=1.0), seed=1)
    assert pts[0].p_base == 1.0 and pts[0].prediction_rate > 0
    # under the default strong penalty p_max never reaches 0.99: every target abstains
    capped = threshold_sweep(parity, parity_condition, [0.99], seed=1)
    assert capped[0].p_base is None and capped[0].prediction_rate == 0.0


def test_sweep_monotone(independent, independent_condition):
    ts = np.linspace(0, 1, 11)
    pts = threshold_sweep(independent, independent_condition, ts, LearnerConfig("logistic", C=1.0), seed=1)
    rates = [p.prediction_rate for p in pts]
    assert rates == sorted(rates, reverse=True)
    with pytest.raises(ValueError):
        threshold_sweep(independent, independent_condition, [1.5])


def test_sweep_constant_secret():
    pts = threshold_sweep(constant_secret_dataset(), ConditionKey(("x",), "secret"), [0.0, 0.5, 0.99], seed=0)
    assert [p.p_base for p in pts] == [1.0, 1.0, 1.0]


# -- baseline_against -------------------------------------------------------------


def test_against_equals_relaxed(parity, parity_condition):
    members, non_members = split_members(parity, default_non_member_count(len(parity)), 5)
    a = baseline_against(members, non_members, parity_condition, seed=5)
    b = compute_baseline(parity, parity_condition, seed=5)
    assert a.to_dict() == b.to_dict()


def test_shuffled_labels_collapse(parity, parity_condition):
    members, non_members = split_members(parity, 600, 1)
    rng = np.random.default_rng(0)
    shuffled = members.with_values("parity", rng.permutation(members.column("parity")))
    res = baseline_against(shuffled, non_members, parity_condition, seed=1)
    assert abs(res.p_base - modal_frequency(non_members.column("parity"))) <= 0.05


def test_memorization(independent, independent_condition):
    targets = independent.take(np.arange(300))
    res = baseline_against(targets, targets, independent_condition, LearnerConfig("nearest_neighbor"))
    assert res.p_base == 1.0


# -- replication ------------------------------------------------------------------


def test_replication_fraction_zero_is_plain_run(independent, independent_condition):
    cfg = LearnerConfig("logistic")
    rows = replication_study(independent, [0.0, 1.0], [independent_condition], [cfg], seed=1)
    plain = compute_baseline(independent, independent_condition, cfg, seed=1)
    assert rows[0].fraction == 0.0 and rows[0].p_base == plain.p_base and rows[0].delta == 0.0


def test_replication_nearest_neighbor_memorizes(independent, independent_condition):
    # brute-force duplicate lookup: every non-member's secret is held by its copy
    cfg = LearnerConfig("nearest_neighbor")
    rows = replication_study(independent, [0.0, 1.0], [independent_condition], [cfg], seed=1)
    assert rows[1].p_base >= 0.99 and rows[1].flagged


def test_replication_logistic_insensitive(independent, independent_condition):
    rows = replication_study(
        independent, [0.0, 0.1, 0.5, 1.0], [independent_condition], [LearnerConfig("logistic")], seed=1
    )
    assert [r.fraction for r in rows] == [0.0, 0.1, 0.5, 1.0]
    assert all(abs(r.delta) <= 0.05 for r in rows)


def test_near_duplicate_scan():
    d = Dataset.build(
        [*constant_secret_dataset(3).columns],
        {"x": [0.0, 0.0, 5.0], "c": ["a", "a", "b"], "secret": ["same"] * 3},
    )
    members, non = d.take([0, 2]), d.take([1])
    assert near_duplicate_scan(members, non, ["x", "c"], 1e-9) == (1,)
    assert near_duplicate_scan(d.take([2]), non, ["x", "c"], 1e-9) == ()
