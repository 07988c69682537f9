"""Train/evaluate pipelines shared by the CLI and the acceptance suite."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from . import readout
from .config import RunConfig
from .readout import ReadoutWeights, SplitError
from .reservoir import compute_states
from .signal import normalize


@dataclass
class EvalReport:
    """Accuracy and confusion matrix of one evaluation.

    ``to_text`` gives the machine-readable form (``key = value`` lines, no
    timings, so reruns are byte-identical); ``table`` the human one.
    """

    accuracy: float
    confusion: np.ndarray
    lam: float = float("nan")
    seeds: dict = field(default_factory=dict)
    config: RunConfig | None = None
    timings: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    predictions: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_classes(self) -> int:
        return self.confusion.shape[0]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_text(self) -> str:
        lines = [
            f"accuracy = {self.accuracy:.6f}",
            f"correct = {int(np.trace(self.confusion))}",
            f"total = {self.total}",
            f"classes = {self.num_classes}",
            f"lambda = {self.lam!r}",
        ]
        lines += [f"seed.{k} = {v}" for k, v in sorted(self.seeds.items())]
        lines += [f"{k} = {_fmt(v)}" for k, v in sorted(self.extra.items())]
        for i, row in enumerate(self.confusion):
            lines.append(f"confusion.{i} = " + " ".join(str(int(c)) for c in row))
        if self.predictions is not None:
            lines.append("predictions = " + " ".join(str(int(p)) for p in self.predictions))
        if self.config is not None:
            lines += [f"config.{line}" for line in self.config.to_text().splitlines()]
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        q = self.num_classes
        width = max(4, len(str(self.confusion.max() if self.confusion.size else 0)) + 1)
        head = "true\\pred " + "".join(f"{j:>{width}d}" for j in range(q))
        rows = [head]
        for i in range(q):
            rows.append(f"{i:>9d} " + "".join(f"{int(c):>{width}d}" for c in self.confusion[i]))
        summary = [f"accuracy   {self.accuracy * 100:8.2f} %  ({int(np.trace(self.confusion))}/{self.total})",
                   f"lambda     {self.lam:10.3g}"]
        summary += [f"{k:<10} {_fmt(v)}" for k, v in sorted(self.extra.items())]
        summary += [f"{k:<10} {v:8.2f} s" for k, v in self.timings.items()]
        return "\n".join(summary + rows)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def confusion_matrix(true, pred, q: int) -> np.ndarray:
    cm = np.zeros((q, q), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def prepare(data, cfg: RunConfig) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    x, _ = normalize(x, cfg.normalization)
    return x


def split_indices(labels, cfg: RunConfig):
    """Stratified train/test split; every class must land on both sides."""
    labels = np.asarray(labels)
    tr, te = readout.holdout_split(labels, cfg.train_fraction, cfg.seed, name="split")
    classes = np.unique(labels)
    missing = np.setdiff1d(classes, np.unique(labels[tr]))
    if missing.size:
        raise SplitError(f"classes {missing.tolist()} have no training datapoints")
    if te.size == 0:
        raise SplitError("test split is empty")
    return tr, te


def fit_readout(states, labels, q: int, cfg: RunConfig, lam: float | None = None) -> ReadoutWeights:
    lam = cfg.lam if lam is None else lam
    if lam is None:
        lam = readout.select_lambda(states, labels, cfg.lambda_grid, seed=cfg.seed,
                                    bias=cfg.readout_bias)
    return readout.ridge_train(states, readout.one_hot(labels, q), lam, bias=cfg.readout_bias)


def evaluate(states, labels, weights: ReadoutWeights, q: int, **kw) -> EvalReport:
    pred = readout.predict(states, weights)
    cm = confusion_matrix(labels, pred, q)
    acc = float(np.trace(cm) / cm.sum()) if cm.sum() else float("nan")
    return EvalReport(acc, cm, weights.lam, predictions=pred, **kw)


@dataclass
class TrainResult:
    weights: ReadoutWeights
    report: EvalReport
    train_idx: np.ndarray
    test_idx: np.ndarray


def train_eval(data, labels, q: int, cfg: RunConfig, workers: int | None = None,
               features: str = "reservoir") -> TrainResult:
    """Split, compute features, fit the ridge readout and score the test part.

    ``features="raw"`` skips the reservoir and regresses on the (normalised)
    samples directly, which is the linear baseline.
    """
    labels = np.asarray(labels, dtype=np.int64)
    timings = {}
    t0 = time.perf_counter()
    x = prepare(data, cfg)
    tr, te = split_indices(labels, cfg)
    if features == "reservoir":
        states = compute_states(x, cfg.reservoir(), workers=workers or cfg.workers)
    elif features == "raw":
        states = x
    else:
        raise ValueError(f"unknown feature kind {features!r}")
    timings["states"] = time.perf_counter() - t0
    t1 = time.perf_counter()
    weights = fit_readout(states[tr], labels[tr], q, cfg)
    timings["readout"] = time.perf_counter() - t1
    report = evaluate(states[te], labels[te], weights, q, config=cfg, timings=timings,
                      seeds={"master": cfg.seed},
                      extra={"features": features, "train_points": int(tr.size),
                             "separable": cfg.reservoir().separable_for(x.shape[1])})
    report.predictions = None
    return TrainResult(weights, report, tr, te)


def infer_dataset(data, labels, weights: ReadoutWeights, q: int, cfg: RunConfig,
                  workers: int | None = None) -> EvalReport:
    if weights.n_features != cfg.reservoir().state_size:
        raise ValueError(f"weights expect {weights.n_features} state values, "
                         f"config produces {cfg.reservoir().state_size}")
    if weights.n_classes != q:
        raise ValueError(f"weights have {weights.n_classes} classes, dataset has {q}")
    x = prepare(data, cfg)
    states = compute_states(x, cfg.reservoir(), workers=workers or cfg.workers)
    return evaluate(states, np.asarray(labels, dtype=np.int64), weights, q,
                    config=cfg, seeds={"master": cfg.seed})


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

SWEEP_KEYS = {
    "grid_input_gain": "input_gain",
    "grid_feedback_gain": "feedback_gain",
    "grid_n_nodes": "n_nodes",
    "grid_filter_taps": "filter_taps",
    "grid_lambda": "ridge_lambda",
    "grid_split": "split",
    "grid_layers": "layers",
}


def sweep_cells(cfg: RunConfig) -> list[dict]:
    """All grid combinations, in the order the grid lists them."""
    axes = [(target, getattr(cfg, key)) for key, target in SWEEP_KEYS.items()
            if getattr(cfg, key)]
    if not axes:
        return [{}]
    names = [a[0] for a in axes]
    return [dict(zip(names, combo)) for combo in itertools.product(*(a[1] for a in axes))]


def budget_indices(labels, idx, per_class: int, seed: int) -> np.ndarray:
    """At most ``per_class`` training points per class, chosen by a seeded shuffle."""
    labels = np.asarray(labels)
    keep = []
    for cls in np.unique(labels[idx]):
        members = idx[labels[idx] == cls]
        keep.append(members[:per_class] if members.size <= per_class else
                    np.sort(members[readout.stream(seed, "sweep-budget", int(cls))
                                    .permutation(members.size)[:per_class]]))
    return np.sort(np.concatenate(keep))


def sweep(data, labels, q: int, cfg: RunConfig, cells: list[dict] | None = None,
          workers: int | None = None) -> list[dict]:
    """Evaluate each grid cell on a reduced training budget.

    Ranked by accuracy (descending), then smaller state size, then grid
    order. Cells whose config is invalid are reported with accuracy NaN and
    ranked last.
    """
    cells = sweep_cells(cfg) if cells is None else cells
    if not cells:
        raise ValueError("sweep grid is empty")
    labels = np.asarray(labels, dtype=np.int64)
    tr, te = split_indices(labels, cfg)
    tr = budget_indices(labels, tr, cfg.sweep_train_per_class, cfg.seed)
    results = []
    for order, cell in enumerate(cells):
        changes = {k: (str(v) if k == "ridge_lambda" else v) for k, v in cell.items()}
        if "layers" in changes and changes["layers"] == 2 and not cfg.layer2_n_nodes:
            changes.setdefault("layer2_n_nodes", changes.get("n_nodes", cfg.n_nodes))
        try:
            ccfg = cfg.replace(**changes)
        except ValueError as exc:
            results.append({"cell": cell, "accuracy": float("nan"), "order": order,
                            "state_size": 0, "error": str(exc)})
            continue
        x = prepare(data, ccfg)
        idx = np.concatenate((tr, te))
        states = np.empty((labels.size, ccfg.reservoir().state_size))
        states[idx] = compute_states(x[idx], ccfg.reservoir(), workers=workers or cfg.workers)
        weights = fit_readout(states[tr], labels[tr], q, ccfg)
        rep = evaluate(states[te], labels[te], weights, q)
        results.append({"cell": cell, "accuracy": rep.accuracy, "lambda": weights.lam,
                        "order": order, "state_size": ccfg.reservoir().state_size})
    results.sort(key=lambda r: (np.isnan(r["accuracy"]), -np.nan_to_num(r["accuracy"]),
                                r["state_size"], r["order"]))
    for rank, r in enumerate(results, 1):
        r["rank"] = rank
    return results


def format_sweep(results: list[dict]) -> str:
    lines = [f"{'rank':>4}  {'accuracy':>8}  {'lambda':>8}  cell"]
    for r in results:
        cell = ", ".join(f"{k}={v}" for k, v in r["cell"].items()) or "(base config)"
        lam = r.get("lambda", float("nan"))
        lines.append(f"{r['rank']:>4}  {r['accuracy'] * 100:8.2f}  {lam:8.1e}  {cell}"
                     + (f"  [{r['error']}]" if "error" in r else ""))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# saliency quick path
# --------------------------------------------------------------------------

def quick_train_fn(cfg: RunConfig, n_nodes: int | None = None, lam: float = readout.QUICK_LAMBDA):
    """Small single-loop reservoir with a fixed lambda, for sweeping many windows."""
    quick = cfg.replace(n_nodes=n_nodes or cfg.saliency_n_nodes, split=False, layers=1,
                        layer2_n_nodes=0, ridge_lambda=str(lam),
                        filter_taps=min(cfg.filter_taps, n_nodes or cfg.saliency_n_nodes))

    def train_fn(mags, labels):
        x, _ = normalize(np.asarray(mags, dtype=np.float64), "global")
        labels = np.asarray(labels, dtype=np.int64)
        q = int(labels.max()) + 1
        tr, te = split_indices(labels, quick)
        states = compute_states(x, quick.reservoir(), workers=quick.workers)
        weights = fit_readout(states[tr], labels[tr], q, quick)
        return evaluate(states[te], labels[te], weights, q).accuracy

    return train_fn


# --------------------------------------------------------------------------
# Mackey-Glass one-step prediction
# --------------------------------------------------------------------------

def nrmse(pred, target) -> float:
    """RMSE over the target's standard deviation (plain RMSE for a constant target)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    rmse = float(np.sqrt(np.mean((pred - target) ** 2)))
    std = float(np.std(target))
    return rmse / std if std > 0 else rmse


def windows(series, window: int):
    """Sliding windows ending at t and the value at t + 1 they predict."""
    series = np.asarray(series, dtype=np.float64)
    if series.size < window + 1:
        raise ValueError(f"series of {series.size} points is shorter than window + horizon")
    view = np.lib.stride_tricks.sliding_window_view(series[:-1], window)
    return view, series[window:]


def _ridge_regress(states, targets, grid, bias):
    """Lambda by hold-out MSE on the last 20% of the training rows."""
    cut = int(0.8 * states.shape[0])
    best, best_err = None, np.inf
    for lam in sorted(grid):
        try:
            w = readout.ridge_train(states[:cut], targets[:cut, None], lam, bias=bias)
        except np.linalg.LinAlgError:
            continue
        err = float(np.mean((readout.scores(states[cut:], w)[:, 0] - targets[cut:]) ** 2))
        if err < best_err:
            best, best_err = lam, err
    return readout.ridge_train(states, targets[:, None], best, bias=bias)


def mackey_bench(series, cfg: RunConfig, configs: dict | None = None,
                 workers: int | None = None) -> dict:
    """One-step-ahead NRMSE of reservoir readouts versus persistence.

    ``configs`` maps names to RunConfigs (default: just ``cfg``). The first
    ``mg_train`` windows train, the next ``mg_test`` test.
    """
    w, n_train, n_test = cfg.mg_window, cfg.mg_train, cfg.mg_test
    series = np.asarray(series, dtype=np.float64)
    if series.size < w + n_train + n_test:
        raise ValueError(f"series of {series.size} points is shorter than "
                         f"window + train + test = {w + n_train + n_test}")
    inputs, targets = windows(series[:w + n_train + n_test], w)
    tr, te = slice(0, n_train), slice(n_train, n_train + n_test)
    result = {"persistence": nrmse(inputs[te, -1], targets[te])}
    for name, ccfg in (configs or {"reservoir": cfg}).items():
        states = compute_states(inputs, ccfg.reservoir(), workers=workers or cfg.workers)
        weights = _ridge_regress(states[tr], targets[tr], ccfg.lambda_grid, ccfg.readout_bias)
        result[name] = nrmse(readout.scores(states[te], weights)[:, 0], targets[te])
    return result
