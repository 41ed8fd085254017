"""Baseline analyses: L1-penalized learners plus two reference predictors.

``fit_logistic_l1`` minimizes the mean multinomial cross-entropy plus
``1 / (C * n) * ||W||_1`` (the scikit-learn ``C`` convention, so ``C=0.01``
is strong regularization), using accelerated proximal gradient with
backtracking and adaptive restart. ``fit_lasso`` runs cyclic coordinate
descent on ``(1 / 2n) ||y - Xw - b||^2 + alpha * ||w||_1``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .data import FeatureMatrix

log = logging.getLogger(__name__)


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerSettings:
    tol: float = 1e-6  # relative objective decrease, proximal gradient
    max_iter: int = 10_000
    cd_tol: float = 1e-8  # max coefficient change, coordinate descent
    cd_max_sweeps: int = 100_000

    @classmethod
    def from_mapping(cls, doc: dict | None) -> "OptimizerSettings":
        doc = dict(doc or {})
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown optimizer settings {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class Prediction:
    target_row_id: int
    value: object = None  # None means abstain
    confidence: float | None = None

    @property
    def abstained(self) -> bool:
        return self.value is None


def _as_design(X) -> np.ndarray:
    arr = X.design if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if not np.all(np.isfinite(arr)):
        raise LearnerError("non-finite feature values")
    return arr


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


# -- categorical models -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CategoricalModel:
    """Class-probability model.

    ``weights`` is ``(classes, features)``. Constant models (majority vote)
    have ``weights is None`` and predict the stored ``priors`` for any input.
    """

    class_labels: tuple[str, ...]
    weights: np.ndarray | None
    intercepts: np.ndarray | None
    regularization_strength: float | None = None
    learner: str = "logistic_l1"
    priors: np.ndarray | None = None
    converged: bool = True
    n_iter: int = 0
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)

    @property
    def n_features(self) -> int | None:
        return None if self.weights is None else self.weights.shape[1]

    def predict_proba(self, X) -> np.ndarray:
        X = _as_design(X)
        if self.weights is None:
            return np.tile(self.priors, (X.shape[0], 1))
        if X.shape[1] != self.n_features:
            raise LearnerError(f"expected {self.n_features} features, got {X.shape[1]}")
        return _softmax(X @ self.weights.T + self.intercepts)

    def predict(self, X) -> np.ndarray:
        labels = np.array(self.class_labels, dtype=object)
        return labels[np.argmax(self.predict_proba(X), axis=1)]

    def to_dict(self) -> dict:
        return {
            "learner": self.learner,
            "class_labels": list(self.class_labels),
            "weights": None if self.weights is None else self.weights.tolist(),
            "intercepts": None if self.intercepts is None else self.intercepts.tolist(),
            "priors": None if self.priors is None else self.priors.tolist(),
            "regularization_strength": self.regularization_strength,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "settings": asdict(self.settings),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CategoricalModel":
        arr = lambda v: None if v is None else np.asarray(v, dtype=np.float64)  # noqa: E731
        return cls(
            tuple(doc["class_labels"]),
            arr(doc["weights"]),
            arr(doc["intercepts"]),
            doc.get("regularization_strength"),
            doc.get("learner", "logistic_l1"),
            arr(doc.get("priors")),
            doc.get("converged", True),
            doc.get("n_iter", 0),
            OptimizerSettings(**doc.get("settings", {})),
        )


def logistic_loss_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray):
    """Mean cross-entropy and its gradient.

    ``W`` is ``(features, classes)``, ``Y`` one-hot ``(rows, classes)``.
    Returns ``(loss, grad_W, grad_b)``.
    """
    n = X.shape[0]
    Z = X @ W + b
    Zmax = Z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(Z - Zmax).sum(axis=1, keepdims=True)) + Zmax
    loss = float(np.sum(Y * (logsum - Z)) / n)
    R = (np.exp(Z - logsum) - Y) / n
    return loss, X.T @ R, R.sum(axis=0)


def _soft(v: np.ndarray | float, t: float):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def fit_logistic_l1(X, y: Sequence, C: float = 0.01, settings: OptimizerSettings | None = None) -> CategoricalModel:
    settings = settings or OptimizerSettings()
    if not C > 0:
        raise LearnerError(f"C must be positive, got {C}")
    X = _as_design(X)
    y = np.asarray(y, dtype=object)
    if X.shape[0] != len(y):
        raise LearnerError(f"{X.shape[0]} rows but {len(y)} labels")
    labels = tuple(sorted(set(y.tolist())))
    if len(labels) < 2:
        raise LearnerError("logistic regression needs at least two distinct labels")

    n, p = X.shape
    k = len(labels)
    index = {v: j for j, v in enumerate(labels)}
    Y = np.zeros((n, k))
    Y[np.arange(n), [index[v] for v in y.tolist()]] = 1.0
    lam = 1.0 / (C * n)

    W = np.zeros((p, k))
    b = np.log(Y.mean(axis=0))
    b -= b.mean()
    f_x, _, _ = logistic_loss_grad(W, b, X, Y)
    F_prev = f_x
    yW, yb = W, b
    t = 1.0
    L = 1.0
    converged = False
    it = 0
    for it in range(1, settings.max_iter + 1):
        f_y, gW, gb = logistic_loss_grad(yW, yb, X, Y)
        while True:
            W_new = _soft(yW - gW / L, lam / L)
            b_new = yb - gb / L
            dW, db = W_new - yW, b_new - yb
            f_new, _, _ = logistic_loss_grad(W_new, b_new, X, Y)
            quad = f_y + np.sum(gW * dW) + np.sum(gb * db) + 0.5 * L * (np.sum(dW * dW) + np.sum(db * db))
            if f_new <= quad + 1e-12 * abs(f_y):
                break
            L *= 2.0
        F_new = f_new + lam * np.abs(W_new).sum()
        if F_new > F_prev:
            if t == 1.0:
                # plain proximal step from the iterate itself: only rounding noise is left
                converged = True
                break
            # momentum overshot: restart from the last accepted iterate
            yW, yb, t = W, b, 1.0
            continue
        decrease = F_prev - F_new
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_next
        yW = W_new + mom * (W_new - W)
        yb = b_new + mom * (b_new - b)
        W, b, t, F_prev = W_new, b_new, t_next, F_new
        if decrease <= settings.tol * max(1.0, abs(F_new)):
            converged = True
            break
    if not converged:
        log.warning("logistic L1 fit did not converge in %d iterations", settings.max_iter)
    return CategoricalModel(labels, W.T.copy(), b.copy(), float(C), "logistic_l1", None, converged, it, settings)


def fit_majority(y: Sequence) -> CategoricalModel:
    """Constant model predicting the modal label; ties go to the smallest label."""
    y = [str(v) for v in y]
    if not y:
        raise LearnerError("majority model needs at least one label")
    labels, counts = np.unique(np.array(y, dtype=object), return_counts=True)
    labels = tuple(labels.tolist())
    return CategoricalModel(labels, None, None, None, "majority", counts / counts.sum())


def validation_precision(model, X, y) -> float:
    """Precision with every target predicted (no abstentions)."""
    pred = model.predict(X)
    return float(np.mean(pred == np.asarray(y, dtype=pred.dtype)))


def best_of(candidates: Sequence, validation: tuple) -> object:
    """Candidate with the highest validation precision; earlier wins ties."""
    if not candidates:
        raise LearnerError("no candidate models")
    X, y = validation
    best, best_score = None, -1.0
    for model in candidates:
        score = validation_precision(model, X, y)
        if score > best_score:
            best, best_score = model, score
    return best


def predict_with_threshold(m, x, p_thresh: float, target_row_id: int = -1) -> Prediction:
    """Predict one target, abstaining when the top class probability is below ``p_thresh``."""
    proba = m.predict_proba(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
    j = int(np.argmax(proba))
    p_max = float(proba[j])
    if p_max < p_thresh:
        return Prediction(target_row_id, None, p_max)
    return Prediction(target_row_id, m.class_labels[j], p_max)


def threshold_predict(m, X, p_thresh: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`predict_with_threshold`: ``(labels or None, p_max)``."""
    proba = m.predict_proba(X)
    j = np.argmax(proba, axis=1)
    p_max = proba[np.arange(len(j)), j]
    values = np.array(m.class_labels, dtype=object)[j]
    values[p_max < p_thresh] = None
    return values, p_max


# -- continuous models --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContinuousModel:
    weights: np.ndarray
    intercept: float
    alpha: float
    converged: bool = True
    n_iter: int = 0
    learner: str = "lasso"

    def predict(self, X) -> np.ndarray:
        X = _as_design(X)
        if X.shape[1] != len(self.weights):
            raise LearnerError(f"expected {len(self.weights)} features, got {X.shape[1]}")
        return X @ self.weights + self.intercept

    def to_dict(self) -> dict:
        return {
            "learner": self.learner,
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "alpha": self.alpha,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }


def fit_lasso(X, y: Sequence[float], alpha: float = 0.1, settings: OptimizerSettings | None = None) -> ContinuousModel:
    settings = settings or OptimizerSettings()
    if not alpha >= 0:
        raise LearnerError(f"alpha must be non-negative, got {alpha}")
    X = _as_design(X)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != len(y):
        raise LearnerError(f"{X.shape[0]} rows but {len(y)} targets")
    if not np.all(np.isfinite(y)):
        raise LearnerError("non-finite target values")
    n, p = X.shape
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    G = Xc.T @ Xc / n
    c = Xc.T @ (y - y_mean) / n
    diag = np.diag(G).copy()
    w = np.zeros(p)
    Gw = np.zeros(p)
    converged = False
    sweep = 0
    for sweep in range(1, settings.cd_max_sweeps + 1):
        max_delta = 0.0
        for j in range(p):
            if diag[j] <= 0.0:
                continue
            rho = c[j] - Gw[j] + diag[j] * w[j]
            new = float(_soft(rho, alpha)) / diag[j]
            delta = new - w[j]
            if delta != 0.0:
                Gw += G[:, j] * delta
                w[j] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta <= settings.cd_tol:
            converged = True
            break
    if not converged:
        log.warning("lasso did not converge in %d sweeps", settings.cd_max_sweeps)
    return ContinuousModel(w, float(y_mean - x_mean @ w), float(alpha), converged, sweep)


def lasso_kkt_residual(model: ContinuousModel, X, y) -> float:
    """Largest violation of the lasso subgradient optimality conditions."""
    X = _as_design(X)
    y = np.asarray(y, dtype=np.float64)
    r = y - model.predict(X)
    g = -(X.T @ r) / len(y)
    w, a = model.weights, model.alpha
    viol = np.where(w != 0, np.abs(g + a * np.sign(w)), np.maximum(np.abs(g) - a, 0.0))
    intercept_viol = abs(float(r.mean()))
    return float(max(viol.max(initial=0.0), intercept_viol))


# -- memorizing reference learner ---------------------------------------------


@dataclass(frozen=True, eq=False)
class NearestNeighborModel:
    """Predicts the target of the Euclidean-nearest fitting row.

    Fitting rows are kept sorted by row id, so the first minimum found is
    the lowest row id among equidistant neighbours.
    """

    X: np.ndarray
    y: np.ndarray
    row_ids: np.ndarray
    categorical: bool
    class_labels: tuple[str, ...] = ()
    learner: str = "nearest_neighbor"
    chunk_elems: int = 4_000_000

    def nearest(self, Q) -> np.ndarray:
        Q = _as_design(Q)
        if Q.shape[1] != self.X.shape[1]:
            raise LearnerError(f"expected {self.X.shape[1]} features, got {Q.shape[1]}")
        m, p = self.X.shape
        step = max(1, self.chunk_elems // max(1, m * max(p, 1)))
        out = np.empty(Q.shape[0], dtype=np.int64)
        for s in range(0, Q.shape[0], step):
            q = Q[s : s + step]
            d = ((q[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
            out[s : s + step] = np.argmin(d, axis=1)
        return out

    def predict(self, Q) -> np.ndarray:
        return self.y[self.nearest(Q)]

    def predict_proba(self, Q) -> np.ndarray:
        if not self.categorical:
            raise LearnerError("class probabilities need a categorical target")
        idx = {v: j for j, v in enumerate(self.class_labels)}
        hits = self.predict(Q)
        P = np.zeros((len(hits), len(self.class_labels)))
        P[np.arange(len(hits)), [idx[v] for v in hits.tolist()]] = 1.0
        return P

    def to_dict(self) -> dict:
        return {"learner": self.learner, "n_fit": int(len(self.y))}


def fit_nearest_neighbor(X, y: Sequence, row_ids: Sequence[int] | None = None) -> NearestNeighborModel:
    X = _as_design(X)
    if X.shape[0] == 0:
        raise LearnerError("nearest-neighbour model needs at least one fitting row")
    y_arr = np.asarray(y)
    if len(y_arr) != X.shape[0]:
        raise LearnerError(f"{X.shape[0]} rows but {len(y_arr)} targets")
    ids = np.arange(X.shape[0]) if row_ids is None else np.asarray(row_ids, dtype=np.int64)
    order = np.argsort(ids, kind="stable")
    categorical = y_arr.dtype.kind in "OUS"
    if categorical:
        y_arr = y_arr.astype(object)
        labels = tuple(sorted(set(y_arr.tolist())))
    else:
        y_arr = y_arr.astype(np.float64)
        labels = ()
    return NearestNeighborModel(X[order].copy(), y_arr[order].copy(), ids[order].copy(), categorical, labels)
