"""Closed-form ridge-regression readout.

Training solves ``(X'X + lam I) W = X'Y`` with a Cholesky factorisation of
the regularised normal matrix; inference is a single product ``x @ W``
followed by an argmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .rng import stream

DEFAULT_LAMBDA_GRID = (1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2)
QUICK_LAMBDA = 1e-4


class SplitError(ValueError):
    """A train/validation split left some class without training examples."""


@dataclass(frozen=True)
class ReadoutWeights:
    values: np.ndarray = field(repr=False)
    lam: float = 0.0
    bias: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if not np.all(np.isfinite(values)):
            raise ValueError("readout weights must be finite")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")

    @property
    def n_features(self) -> int:
        """Expected state length (excludes the constant column)."""
        return self.values.shape[0] - int(self.bias)

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]


def one_hot(label, num_classes: int) -> np.ndarray:
    """Indicator row(s) for zero-based labels; accepts a scalar or an array."""
    labels = np.asarray(label)
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes}), got {labels.min()}..{labels.max()}")
    if not np.issubdtype(labels.dtype, np.integer):
        if labels.size and not np.all(labels == np.round(labels)):
            raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
    return np.eye(num_classes)[labels]


def with_bias(states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    ones = np.ones(states.shape[:-1] + (1,))
    return np.concatenate((states, ones), axis=-1)


def ridge_train(states, labels, lam: float, bias: bool = False) -> ReadoutWeights:
    """Ridge weights for a (B, N) state matrix and (B, Q) one-hot targets.

    ``labels`` may also be a 1-D vector of integer class indices, in which
    case the class count is taken from its maximum. Raises ``LinAlgError``
    when ``lam == 0`` and the normal matrix is singular.
    """
    x = np.asarray(states, dtype=np.float64)
    y = np.asarray(labels)
    if y.ndim == 1:
        y = one_hot(y, int(y.max()) + 1)
    y = y.astype(np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("states and labels must be matrices")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} state rows but {y.shape[0]} label rows")
    if x.shape[0] < 1:
        raise ValueError("need at least one training datapoint")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if bias:
        x = with_bias(x)
    gram = x.T @ x
    gram[np.diag_indices_from(gram)] += lam
    rhs = x.T @ y
    try:
        factor = linalg.cho_factor(gram, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError(
            f"regularised normal matrix is not positive definite (lambda={lam})") from exc
    w = linalg.cho_solve(factor, rhs, check_finite=False)
    if lam == 0 and np.linalg.cond(gram) > 1e14:
        raise linalg.LinAlgError("normal matrix is numerically singular at lambda=0")
    return ReadoutWeights(w, float(lam), bias)


def scores(states, weights: ReadoutWeights) -> np.ndarray:
    x = np.asarray(states, dtype=np.float64)
    if x.shape[-1] != weights.n_features:
        raise ValueError(f"state length {x.shape[-1]} does not match weights ({weights.n_features})")
    if weights.bias:
        x = with_bias(x)
    return x @ weights.values


def infer(state, weights: ReadoutWeights) -> tuple[int, np.ndarray]:
    """Predicted class (lowest index wins ties) and the score vector ``x W``."""
    score = scores(np.asarray(state, dtype=np.float64).reshape(-1), weights)
    return int(np.argmax(score)), score


def predict(states, weights: ReadoutWeights) -> np.ndarray:
    """Vectorised :func:`infer` returning only the class indices."""
    return np.argmax(scores(states, weights), axis=1)


def holdout_split(labels, fraction: float, seed: int, name: str = "split"):
    """Seeded stratified split; returns (train_idx, test_idx), both sorted.

    Each class contributes ``round(fraction * count)`` training points
    (at least one when it has any).
    """
    labels = np.asarray(labels)
    train, test = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        perm = stream(seed, name, int(cls)).permutation(idx.size)
        n_train = min(idx.size, max(1, int(round(fraction * idx.size))))
        train.append(idx[perm[:n_train]])
        test.append(idx[perm[n_train:]])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def select_lambda(states, labels, grid=DEFAULT_LAMBDA_GRID, seed: int = 0,
                  fraction: float = 0.8, bias: bool = False) -> float:
    """Grid value with the best held-out accuracy on a seeded 80/20 split.

    Ties go to the smaller lambda.
    """
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("lambda grid is empty")
    if grid[0] < 0:
        raise ValueError("lambda grid entries must be non-negative")
    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = np.argmax(labels, axis=1)
    if len(grid) == 1:
        return grid[0]
    x = np.asarray(states, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("need at least two datapoints to select lambda")
    tr, va = holdout_split(labels, fraction, seed, name="lambda-split")
    classes = np.unique(labels)
    missing = np.setdiff1d(classes, np.unique(labels[tr]))
    if missing.size or va.size == 0:
        raise SplitError(f"degenerate lambda split (classes missing from train: {missing.tolist()}, "
                         f"validation size {va.size})")
    q = int(classes.max()) + 1
    y = one_hot(labels[tr], q)
    best, best_acc = grid[0], -1.0
    for lam in grid:
        try:
            w = ridge_train(x[tr], y, lam, bias=bias)
        except linalg.LinAlgError:
            continue
        acc = float(np.mean(predict(x[va], w) == labels[va]))
        if acc > best_acc:
            best, best_acc = lam, acc
    return best


def objective_gradient(states, labels, weights: ReadoutWeights) -> np.ndarray:
    """Gradient ``2 X'(XW - Y) + 2 lam W`` of the ridge objective at ``weights``."""
    x = np.asarray(states, dtype=np.float64)
    if weights.bias:
        x = with_bias(x)
    w = weights.values
    return 2.0 * x.T @ (x @ w - np.asarray(labels, dtype=np.float64)) + 2.0 * weights.lam * w
