"""Linear classifier with calibrated class probabilities.

Multinomial logistic regression with an L2 penalty, z-scored features, and
the inverse-regularization strength picked by stratified cross-validation
over a grid. The loss and gradient are explicit so they can be checked
against finite differences; minimization uses a quasi-Newton method.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import DataError, NumericalError

# inverse regularization strengths 2^-3 .. 2^10
DEFAULT_C_GRID = [2.0 ** e for e in range(-3, 11)]
GRAD_TOL = 1e-6
MAX_ITER = 500


@dataclass(frozen=True)
class LinearModel:
    """Affine scores plus softmax; weights include the bias column last."""

    weights: np.ndarray       # (C, d+1)
    class_count: int
    feature_dim: int
    chosen_c: float
    feature_mean: np.ndarray  # (d,)
    feature_scale: np.ndarray  # (d,)


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    expo = np.exp(shifted)
    return expo / expo.sum(axis=1, keepdims=True)


def loss_and_gradient(
    w_flat: np.ndarray,
    x1: np.ndarray,
    y_idx: np.ndarray,
    classes: int,
    c_reg: float,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus the ridge penalty, with its exact gradient.

    `x1` carries a trailing all-ones bias column; the bias weights are not
    penalized. The penalty is ||W||^2 / (2 * c_reg * n), so growing `c_reg`
    removes regularization.
    """
    n = x1.shape[0]
    w = w_flat.reshape(classes, x1.shape[1])
    scores = x1 @ w.T
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    nll = -log_probs[np.arange(n), y_idx].mean()
    probs = np.exp(log_probs)
    resid = probs
    resid[np.arange(n), y_idx] -= 1.0
    grad = (resid.T @ x1) / n
    penalty_w = w.copy()
    penalty_w[:, -1] = 0.0
    loss = nll + float(np.sum(penalty_w * penalty_w)) / (2.0 * c_reg * n)
    grad += penalty_w / (c_reg * n)
    return loss, grad.ravel()


def _fit_weights(x1: np.ndarray, y_idx: np.ndarray, classes: int, c_reg: float) -> np.ndarray:
    w0 = np.zeros(classes * x1.shape[1])
    result = optimize.minimize(
        loss_and_gradient,
        w0,
        args=(x1, y_idx, classes, c_reg),
        jac=True,
        method="L-BFGS-B",
        options={"gtol": GRAD_TOL, "ftol": 0.0, "maxiter": MAX_ITER},
    )
    if not np.isfinite(result.fun):
        raise NumericalError("classifier optimization diverged")
    return result.x.reshape(classes, x1.shape[1])


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (x - mean) / scale, mean, scale


def _with_bias(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1))])


def _stratified_folds(
    y_idx: np.ndarray, folds: int, rng: np.random.Generator
) -> np.ndarray:
    """Fold assignment per sample, class-balanced, shuffled per class."""
    assignment = np.empty(y_idx.shape[0], dtype=np.int64)
    for cls in np.unique(y_idx):
        members = np.flatnonzero(y_idx == cls)
        members = members[rng.permutation(members.size)]
        assignment[members] = np.arange(members.size) % folds
    return assignment


def train(
    x: np.ndarray,
    y: np.ndarray,
    c_grid: list[float] | None = None,
    folds: int = 5,
    rng_seed: int = 0,
) -> LinearModel:
    """Fit the classifier, selecting the grid strength by cross-validation.

    folds=1 skips cross-validation and uses the first grid value. When a
    requested fold count would leave some training fold without a class, it
    is reduced to the largest feasible count >= 2; if even two folds are
    infeasible (a class with a single sample) the folds=1 behavior applies.
    Accuracy ties between grid values keep the smaller strength.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DataError("feature matrix and labels disagree in length")
    if not np.isfinite(x).all():
        raise DataError("features contain non-finite values")
    if c_grid is None:
        c_grid = DEFAULT_C_GRID
    if len(c_grid) == 0 or any(c <= 0 for c in c_grid):
        raise DataError("grid must hold positive strengths")
    if folds < 1:
        raise DataError("folds must be >= 1")
    classes = int(y.max())
    if y.min() < 1:
        raise DataError("labels must be in 1..C")
    counts = np.bincount(y, minlength=classes + 1)[1:]
    if (counts == 0).any():
        missing = [c + 1 for c in np.flatnonzero(counts == 0)]
        raise DataError(f"classes absent from the training labels: {missing}")
    if x.shape[0] < classes:
        raise DataError("fewer samples than classes")

    z, mean, scale = _standardize(x)
    x1 = _with_bias(z)
    y_idx = y - 1

    effective_folds = folds
    if folds > 1:
        effective_folds = min(folds, int(counts.min()))
    if effective_folds >= 2:
        rng = np.random.default_rng(rng_seed)
        fold_of = _stratified_folds(y_idx, effective_folds, rng)
        best_c, best_acc = None, -1.0
        for c_reg in sorted(c_grid):
            fold_accs = []
            for f in range(effective_folds):
                train_mask = fold_of != f
                w = _fit_weights(x1[train_mask], y_idx[train_mask], classes, c_reg)
                pred = np.argmax(x1[~train_mask] @ w.T, axis=1)
                fold_accs.append(float((pred == y_idx[~train_mask]).mean()))
            acc = float(np.mean(fold_accs))
            if acc > best_acc:
                best_c, best_acc = c_reg, acc
        chosen = best_c
    else:
        chosen = c_grid[0]

    weights = _fit_weights(x1, y_idx, classes, chosen)
    return LinearModel(weights, classes, x.shape[1], float(chosen), mean, scale)


def predict_proba(model: LinearModel, x: np.ndarray) -> np.ndarray:
    """Per-sample class probabilities, shape (m, C), rows summing to one."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.feature_dim:
        raise DataError(
            f"feature dimension {x.shape[1]} does not match the model's "
            f"{model.feature_dim}"
        )
    z = (x - model.feature_mean) / model.feature_scale
    return _softmax(_with_bias(z) @ model.weights.T)


def save_model(model: LinearModel, header_path: str, data_name: str | None = None) -> None:
    """JSON header (dims, chosen strength, scaling stats) + raw f32 weights."""
    if data_name is None:
        stem = os.path.splitext(os.path.basename(header_path))[0]
        data_name = stem + ".raw"
    raw_path = os.path.join(os.path.dirname(header_path), data_name)
    model.weights.astype("<f4").tofile(raw_path)
    header = {
        "class_count": model.class_count,
        "feature_dim": model.feature_dim,
        "chosen_c": model.chosen_c,
        "feature_mean": [float(v) for v in model.feature_mean],
        "feature_scale": [float(v) for v in model.feature_scale],
        "data": data_name,
    }
    with open(header_path, "w", encoding="utf-8") as fh:
        json.dump(header, fh, sort_keys=True)
        fh.write("\n")
