import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonmember.learners import (
    CategoricalModel,
    LearnerError,
    OptimizerSettings,
    best_of,
    fit_lasso,
    fit_logistic_l1,
    fit_majority,
    fit_nearest_neighbor,
    lasso_kkt_residual,
    logistic_loss_grad,
    predict_with_threshold,
    threshold_predict,
)


def _three_class(n=300, p=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    W = rng.normal(size=(p, 3)) * 2
    y = np.array(["a", "b", "c"], dtype=object)[np.argmax(X @ W + rng.gumbel(size=(n, 3)), axis=1)]
    return X, y


# -- logistic ------------------------------------------------------------------


def test_separable_pair():
    X = np.array([[-1.0], [1.0]])
    m = fit_logistic_l1(X, ["A", "B"], C=100.0)
    for x, label in ((-1.0, "A"), (1.0, "B")):
        pred = predict_with_threshold(m, [x], 0.0)
        assert pred.value == label and pred.confidence > 0.5


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(42)
    X = rng.normal(size=(25, 4))
    Y = np.eye(3)[rng.integers(0, 3, size=25)]
    W = rng.normal(size=(4, 3))
    b = rng.normal(size=3)
    _, gW, gb = logistic_loss_grad(W, b, X, Y)
    h = 1e-6
    fd_W = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += h
        Wm[idx] -= h
        fd_W[idx] = (logistic_loss_grad(Wp, b, X, Y)[0] - logistic_loss_grad(Wm, b, X, Y)[0]) / (2 * h)
    fd_b = np.zeros_like(b)
    for j in range(3):
        bp, bm = b.copy(), b.copy()
        bp[j] += h
        bm[j] -= h
        fd_b[j] = (logistic_loss_grad(W, bp, X, Y)[0] - logistic_loss_grad(W, bm, X, Y)[0]) / (2 * h)
    analytic = np.concatenate([gW.ravel(), gb])
    numeric = np.concatenate([fd_W.ravel(), fd_b])
    assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) <= 1e-5


def test_infinite_penalty_collapses_to_priors():
    X, y = _three_class()
    m = fit_logistic_l1(X, y, C=1e-9)
    assert np.all(m.weights == 0)
    freq = np.array([np.mean(y == c) for c in m.class_labels])
    np.testing.assert_allclose(m.predict_proba(X[:3]), np.tile(freq, (3, 1)), atol=1e-6)


def test_strong_default_penalty_is_sparse_but_learns():
    X, y = _three_class(n=3000)
    m = fit_logistic_l1(X, y, C=0.01)
    assert m.converged
    assert np.mean(m.predict(X) == y) > 0.6


def test_logistic_errors():
    with pytest.raises(LearnerError, match="two distinct"):
        fit_logistic_l1(np.ones((3, 1)), ["a"] * 3)
    with pytest.raises(LearnerError, match="non-finite"):
        fit_logistic_l1(np.array([[np.nan], [1.0]]), ["a", "b"])
    with pytest.raises(LearnerError, match="rows"):
        fit_logistic_l1(np.ones((3, 1)), ["a", "b"])


def test_non_convergence_is_flagged_not_fatal():
    X, y = _three_class()
    m = fit_logistic_l1(X, y, C=10.0, settings=OptimizerSettings(max_iter=2))
    assert not m.converged
    assert m.predict(X).shape == (len(y),)


def test_logistic_deterministic_and_serializable():
    X, y = _three_class()
    a = fit_logistic_l1(X, y, C=0.5)
    b = fit_logistic_l1(X, y, C=0.5)
    assert a.weights.tobytes() == b.weights.tobytes()
    assert a.intercepts.tobytes() == b.intercepts.tobytes()
    doc = json.loads(json.dumps(a.to_dict()))
    back = CategoricalModel.from_dict(doc)
    np.testing.assert_array_equal(back.predict_proba(X), a.predict_proba(X))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 10.0))
def test_probabilities_are_distributions(seed, C):
    X, y = _three_class(n=60, p=3, seed=seed)
    if len(set(y.tolist())) < 2:
        return
    m = fit_logistic_l1(X, y, C=C)
    P = m.predict_proba(np.random.default_rng(seed).normal(size=(20, 3)) * 5)
    assert np.all(np.isfinite(P)) and np.all((P >= 0) & (P <= 1))
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(P.max(axis=1) >= 1 / len(m.class_labels) - 1e-12)


# -- thresholds ----------------------------------------------------------------


def _fixed_model(p_first=0.6):
    return CategoricalModel(("A", "B"), np.zeros((2, 1)), np.log([p_first, 1 - p_first]))


def test_threshold_rule():
    m = _fixed_model(0.6)
    assert predict_with_threshold(m, [0.0], 0.7).abstained
    pred = predict_with_threshold(m, [0.0], 0.5, target_row_id=3)
    assert (pred.value, pred.target_row_id) == ("A", 3)
    assert pred.confidence == pytest.approx(0.6)
    assert not predict_with_threshold(m, [0.0], 0.0).abstained
    with pytest.raises(LearnerError, match="features"):
        predict_with_threshold(m, [0.0, 1.0], 0.5)


def test_argmax_tie_uses_label_order():
    assert predict_with_threshold(_fixed_model(0.5), [0.0], 0.0).value == "A"


def test_abstentions_monotone_in_threshold():
    X, y = _three_class()
    m = fit_logistic_l1(X, y, C=1.0)
    abstains = [int(np.sum(threshold_predict(m, X, t)[0] == None)) for t in np.linspace(0, 1, 21)]  # noqa: E711
    assert abstains == sorted(abstains)
    assert abstains[0] == 0


# -- majority / best_of ----------------------------------------------------------


def test_majority():
    m = fit_majority(["A", "A", "B"])
    pred = predict_with_threshold(m, [], 0.0)
    assert pred.value == "A" and pred.confidence == pytest.approx(2 / 3)
    m = fit_majority(["B", "A"])
    pred = predict_with_threshold(m, [1.0, 2.0], 0.0)
    assert pred.value == "A" and pred.confidence == 0.5
    m = fit_majority(["a", "b", "c", "d"] * 25)
    assert predict_with_threshold(m, [0], 0).confidence == pytest.approx(0.25)


def test_best_of():
    X = np.linspace(-1, 1, 10)[:, None]
    y = np.array(["A"] * 7 + ["B"] * 3, dtype=object)
    y[0] = "B"  # a threshold rule at x > 0.5 gets 9 of 10, the majority vote 6 of 10
    majority = fit_majority(["A"])
    sign = CategoricalModel(("A", "B"), np.array([[-50.0], [50.0]]), np.array([25.0, -25.0]))
    assert np.mean(majority.predict(X) == y) == pytest.approx(0.6)
    assert np.mean(sign.predict(X) == y) == pytest.approx(0.9)
    assert best_of([majority, sign], (X, y)) is sign
    assert best_of([majority, fit_majority(["A", "A"])], (X, y)) is majority
    assert best_of([sign], (X, y)) is sign
    with pytest.raises(LearnerError):
        best_of([], (X, y))


# -- lasso ---------------------------------------------------------------------


def test_lasso_identity_feature():
    x = np.linspace(-3, 5, 40)
    m = fit_lasso(x[:, None], x, alpha=0.0)
    assert m.weights[0] == pytest.approx(1.0, abs=1e-8)
    assert m.intercept == pytest.approx(0.0, abs=1e-8)


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0)


@pytest.mark.parametrize("alpha", [0.0, 0.05, 0.3, 1.0])
def test_lasso_orthonormal_closed_form(alpha):
    rng = np.random.default_rng(7)
    n, p = 60, 5
    A = rng.normal(size=(n, p))
    A -= A.mean(axis=0)
    Q, _ = np.linalg.qr(A)
    X = Q * np.sqrt(n)  # centered columns with X^T X / n = I
    y = X @ np.array([1.5, -0.8, 0.2, 0.0, -0.05]) + rng.normal(scale=0.3, size=n) + 4.0
    ols = X.T @ (y - y.mean()) / n
    m = fit_lasso(X, y, alpha)
    np.testing.assert_allclose(m.weights, _soft(ols, alpha), atol=1e-6)
    assert lasso_kkt_residual(m, X, y) <= 1e-5


# 5x3 toy design for the all-zero threshold
TOY_X = np.array([[1.0, 0.0, 2.0], [2.0, 1.0, 0.0], [0.0, 3.0, 1.0], [1.0, 1.0, 1.0], [4.0, 0.0, 3.0]])
TOY_Y = np.array([1.0, 3.0, 2.0, 0.0, 5.0])


def test_lasso_zero_above_kkt_threshold():
    Xc = TOY_X - TOY_X.mean(axis=0)
    alpha_max = np.max(np.abs(Xc.T @ (TOY_Y - TOY_Y.mean()))) / len(TOY_Y)
    for alpha in (alpha_max, alpha_max * 1.5, 100.0):
        m = fit_lasso(TOY_X, TOY_Y, alpha)
        assert np.all(m.weights == 0.0)
        assert m.intercept == pytest.approx(TOY_Y.mean())
    assert np.any(fit_lasso(TOY_X, TOY_Y, alpha_max * 0.9).weights != 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 2.0))
def test_lasso_kkt_property(seed, alpha):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 6))
    X[:, 5] = X[:, 0] + 0.1 * rng.normal(size=40)  # correlated pair
    y = X @ rng.normal(size=6) + rng.normal(size=40)
    m = fit_lasso(X, y, alpha)
    assert m.converged
    assert lasso_kkt_residual(m, X, y) <= 1e-5


def test_lasso_errors_and_determinism():
    with pytest.raises(LearnerError):
        fit_lasso(np.ones((2, 1)), [1.0, np.inf])
    with pytest.raises(LearnerError):
        fit_lasso(np.ones((2, 1)), [1.0])
    a = fit_lasso(TOY_X, TOY_Y, 0.1)
    b = fit_lasso(TOY_X, TOY_Y, 0.1)
    assert a.weights.tobytes() == b.weights.tobytes()


# -- nearest neighbour -----------------------------------------------------------


def test_nearest_neighbor_exact_and_ties():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [-1.0, -1.0]])
    nn = fit_nearest_neighbor(X, np.array(["A", "B", "C"], dtype=object), row_ids=[10, 11, 12])
    assert nn.predict(np.array([[1.0, 1.0]])).tolist() == ["B"]
    # equidistant from rows 11 and 12 (labels B, C); lower id wins
    nn = fit_nearest_neighbor(X[1:], np.array(["B", "A"], dtype=object), row_ids=[7, 3])
    assert nn.predict(np.array([[0.0, 0.0]])).tolist() == ["A"]
    with pytest.raises(LearnerError):
        fit_nearest_neighbor(np.zeros((0, 2)), [])


def test_nearest_neighbor_duplicated_rows_brute_force():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(80, 3))
    y = rng.choice(["p", "q", "r"], size=80).astype(object)
    X2, y2 = np.vstack([X, X]), np.concatenate([y, y])
    nn = fit_nearest_neighbor(X2, y2)
    # brute-force scan
    for i in range(80):
        d = [float(np.sum((X2[j] - X[i]) ** 2)) for j in range(160)]
        assert y2[int(np.argmin(d))] == y[i]
    assert np.all(nn.predict(X) == y)
    cont = fit_nearest_neighbor(X2, np.concatenate([X[:, 0], X[:, 0]]))
    np.testing.assert_array_equal(cont.predict(X), X[:, 0])
