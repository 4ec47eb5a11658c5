"""Bag-of-codes logistic regression with L1/L2 penalties and grid search.

Objective (C is inverse regularization strength, intercept unpenalized):

    F(w, b) = 0.5 * pen(w) + C * sum_i log(1 + exp(-y_i (x_i . w + b)))

with y in {-1, +1}, pen = ||w||_2^2 for L2 and ||w||_1 for L1. Both
penalties are minimized by proximal gradient descent with backtracking
line search (for L2 the prox is the identity, so it reduces to plain
gradient descent); the backtracking condition makes the objective
monotone nonincreasing, and the L1 prox is a soft-threshold, so small-C
L1 fits produce exact zeros. The config-compatible "solver" tags
{'liblinear', 'saga'} both dispatch here.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .codemap import CodeSystem, MedicalCode
from .cohort import LabeledSequence
from .errors import (
    DataError,
    DimensionMismatchError,
    EmptyCohortError,
    InvalidConfigError,
    SingleClassError,
)
from .metrics import PredictionSet, pr_auc, roc_auc


@dataclass(frozen=True)
class FeatureSpace:
    """Bijection code -> column index, built from the training split only."""

    codes: Tuple[MedicalCode, ...]
    index: Dict[MedicalCode, int]

    def __len__(self) -> int:
        return len(self.codes)

    @classmethod
    def from_cohort(cls, cohort: Sequence[LabeledSequence]) -> "FeatureSpace":
        seen = {c for ex in cohort for c in ex.history}
        codes = tuple(sorted(seen, key=lambda c: (c.system.value, c.code)))
        return cls(codes=codes, index={c: i for i, c in enumerate(codes)})


@dataclass
class DesignMatrix:
    matrix: sp.csr_matrix  # binary presence indicators
    labels: np.ndarray     # int {0,1}, row-aligned
    example_ids: List[str]


def featurize(
    cohort: Sequence[LabeledSequence], space: Optional[FeatureSpace] = None
) -> Tuple[DesignMatrix, FeatureSpace]:
    """Binary presence featurization; unseen codes are dropped when a
    prebuilt space is supplied (val/test)."""
    if not cohort:
        raise EmptyCohortError("cannot featurize an empty cohort")
    if space is None:
        space = FeatureSpace.from_cohort(cohort)
    indptr = [0]
    indices: List[int] = []
    for ex in cohort:
        cols = {space.index[c] for c in ex.history if c in space.index}
        indices.extend(sorted(cols))
        indptr.append(len(indices))
    matrix = sp.csr_matrix(
        (np.ones(len(indices), dtype=np.float64), np.array(indices, dtype=np.int32),
         np.array(indptr, dtype=np.int32)),
        shape=(len(cohort), len(space)),
    )
    labels = np.array([ex.label for ex in cohort], dtype=np.int64)
    return DesignMatrix(matrix=matrix, labels=labels,
                        example_ids=[ex.example_id for ex in cohort]), space


@dataclass
class LRModel:
    weights: np.ndarray
    bias: float
    penalty: str  # "l1" | "l2"
    C: float
    n_iter: int
    final_objective: float
    converged: bool
    objective_history: List[float] = field(default_factory=list, repr=False)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _data_loss_grad(X: sp.csr_matrix, y_signed: np.ndarray, w: np.ndarray, b: float, C: float):
    margins = y_signed * (X @ w + b)
    loss = C * float(np.logaddexp(0.0, -margins).sum())
    coef = -C * y_signed * _sigmoid(-margins)
    return loss, X.T @ coef, float(coef.sum())


def _soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def objective(X: sp.csr_matrix, y: np.ndarray, w: np.ndarray, b: float,
              penalty: str, C: float) -> float:
    y_signed = 2.0 * y - 1.0
    margins = y_signed * (X @ w + b)
    data = C * float(np.logaddexp(0.0, -margins).sum())
    if penalty == "l2":
        return data + 0.5 * float(w @ w)
    return data + 0.5 * float(np.abs(w).sum())


def objective_grad(X: sp.csr_matrix, y: np.ndarray, w: np.ndarray, b: float,
                   penalty: str, C: float) -> Tuple[np.ndarray, float]:
    """Analytic gradient of the objective at (w, b); for L1 this uses the
    subgradient 0.5*sign(w), exact wherever no component of w is zero."""
    y_signed = 2.0 * y - 1.0
    _, gw, gb = _data_loss_grad(X, y_signed, w, b, C)
    if penalty == "l2":
        return gw + w, gb
    return gw + 0.5 * np.sign(w), gb


def train_lr(
    design: DesignMatrix,
    penalty: str,
    C: float,
    max_iter: int = 500,
    tol: float = 1e-6,
) -> LRModel:
    """Fit by monotone proximal gradient; stops at prox-residual norm <= tol."""
    penalty = penalty.lower()
    if penalty not in ("l1", "l2"):
        raise InvalidConfigError(f"penalty must be 'l1' or 'l2', got {penalty!r}")
    if C <= 0:
        raise InvalidConfigError("C must be positive")
    X, y = design.matrix, design.labels
    if X.shape[0] == 0:
        raise EmptyCohortError("empty design matrix")
    if len(np.unique(y)) < 2:
        raise SingleClassError("training data contains a single class")
    y_signed = (2.0 * y - 1.0).astype(np.float64)

    w = np.zeros(X.shape[1])
    b = 0.0

    def smooth(w_, b_):
        loss, gw, gb = _data_loss_grad(X, y_signed, w_, b_, C)
        if penalty == "l2":
            return loss + 0.5 * float(w_ @ w_), gw + w_, gb
        return loss, gw, gb

    def h_term(w_):
        return 0.5 * float(np.abs(w_).sum()) if penalty == "l1" else 0.0

    f_smooth, gw, gb = smooth(w, b)
    f_total = f_smooth + h_term(w)
    history = [f_total]
    step = 1.0
    converged = False
    n_iter = 0
    for it in range(max_iter):
        n_iter = it + 1
        step *= 1.25
        accepted = False
        while step >= 1e-18:
            w_new = w - step * gw
            b_new = b - step * gb
            if penalty == "l1":
                w_new = _soft_threshold(w_new, 0.5 * step)
            dw = w_new - w
            db = b_new - b
            sq = float(dw @ dw) + db * db
            f_new, gw_new, gb_new = smooth(w_new, b_new)
            f_new_total = f_new + h_term(w_new)
            quad_bound = f_smooth + float(gw @ dw) + gb * db + sq / (2.0 * step)
            if f_new <= quad_bound + 1e-12 and f_new_total <= f_total:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no float-measurable descent left
            n_iter = it
            converged = True
            break
        residual = np.sqrt(sq) / step
        w, b = w_new, float(b_new)
        f_smooth, gw, gb, f_total = f_new, gw_new, gb_new, f_new_total
        history.append(f_total)
        if residual <= tol:
            converged = True
            break

    return LRModel(
        weights=w, bias=b, penalty=penalty, C=float(C), n_iter=n_iter,
        final_objective=history[-1], converged=converged, objective_history=history,
    )


def predict_proba(model: LRModel, design) -> np.ndarray:
    """sigmoid(X w + b) per row; accepts a DesignMatrix or a sparse matrix."""
    X = design.matrix if isinstance(design, DesignMatrix) else design
    if X.shape[1] != model.weights.shape[0]:
        raise DimensionMismatchError(
            f"matrix has {X.shape[1]} columns, model expects {model.weights.shape[0]}"
        )
    return _sigmoid(X @ model.weights + model.bias)


@dataclass(frozen=True)
class GridSearchSpec:
    c_values: Tuple[float, ...] = (0.1, 1.0, 10.0)
    penalties: Tuple[str, ...] = ("l1", "l2")
    solvers: Tuple[str, ...] = ("liblinear", "saga")
    max_iters: Tuple[int, ...] = (100, 200, 500)
    tol: float = 1e-6

    def __post_init__(self):
        if not (self.c_values and self.penalties and self.solvers and self.max_iters):
            raise InvalidConfigError("grid must be nonempty in every dimension")

    def cells(self) -> List[Tuple[str, float, str, int]]:
        return [
            (p, c, s, m)
            for p in self.penalties
            for c in self.c_values
            for s in self.solvers
            for m in self.max_iters
        ]


@dataclass
class GridCellResult:
    penalty: str
    C: float
    solver: str
    max_iter: int
    val_pr_auc: Optional[float] = None
    val_roc_auc: Optional[float] = None
    objective: Optional[float] = None
    converged: bool = False
    selected: bool = False
    error: Optional[str] = None


def grid_search(
    spec: GridSearchSpec,
    train: DesignMatrix,
    val: DesignMatrix,
    threads: int = 1,
) -> Tuple[LRModel, List[GridCellResult]]:
    """Train every cell, pick argmax validation PR-AUC.

    Ties break toward larger C, then L2, then smaller max_iter, then
    solver tag ascending, so the selection is deterministic. Failing
    cells are recorded and skipped.
    """
    if train.matrix.shape[1] != val.matrix.shape[1]:
        raise DimensionMismatchError("train and val must share a feature space")

    def run_cell(cell):
        penalty, c_value, solver, max_iter = cell
        result = GridCellResult(penalty=penalty, C=c_value, solver=solver, max_iter=max_iter)
        try:
            model = train_lr(train, penalty, c_value, max_iter=max_iter, tol=spec.tol)
            scores = predict_proba(model, val)
            preds = PredictionSet.from_arrays(val.example_ids, scores, val.labels)
            result.val_pr_auc = pr_auc(preds)
            result.val_roc_auc = roc_auc(preds)
            result.objective = model.final_objective
            result.converged = model.converged
            return result, model
        except DataError as exc:
            result.error = f"{type(exc).__name__}: {exc}"
            return result, None

    cells = spec.cells()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run_cell, cells))
    else:
        outcomes = [run_cell(cell) for cell in cells]

    def selection_key(outcome):
        result, _ = outcome
        # ascending sort: best PR-AUC first, ties toward larger C, L2,
        # smaller max_iter, then solver tag ascending
        return (
            -result.val_pr_auc,
            -result.C,
            result.penalty != "l2",
            result.max_iter,
            result.solver,
        )

    candidates = [o for o in outcomes if o[1] is not None]
    if not candidates:
        raise SingleClassError(
            "every grid cell failed; first error: " + str(outcomes[0][0].error)
        )
    best_result, best_model = sorted(candidates, key=selection_key)[0]
    best_result.selected = True
    return best_model, [result for result, _ in outcomes]


def save_model(model: LRModel, path) -> None:
    """Flat text checkpoint: header with penalty/C/bias, then index weight lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            f"penalty={model.penalty} C={model.C!r} bias={model.bias!r} "
            f"n_features={model.weights.shape[0]} converged={int(model.converged)}\n"
        )
        for i, value in enumerate(model.weights):
            fh.write(f"{i} {float(value)!r}\n")


def load_model(path) -> LRModel:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip()
        fields = dict(part.split("=", 1) for part in header.split())
        n = int(fields["n_features"])
        weights = np.zeros(n)
        for line in fh:
            if not line.strip():
                continue
            idx, value = line.split()
            weights[int(idx)] = float(value)
    return LRModel(
        weights=weights,
        bias=float(fields["bias"]),
        penalty=fields["penalty"],
        C=float(fields["C"]),
        n_iter=0,
        final_objective=float("nan"),
        converged=bool(int(fields["converged"])),
    )


def save_feature_space(space: FeatureSpace, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("index,system,code\n")
        for i, code in enumerate(space.codes):
            fh.write(f"{i},{code.system.value},{code.code}\n")


def load_feature_space(path) -> FeatureSpace:
    path = Path(path)
    codes: List[MedicalCode] = []
    with path.open(encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "index,system,code":
            raise DataError(f"{path}: expected header 'index,system,code'")
        for line in fh:
            if not line.strip():
                continue
            _, system, code = line.strip().split(",")
            codes.append(MedicalCode(CodeSystem.from_tag(system), code))
    return FeatureSpace(codes=tuple(codes), index={c: i for i, c in enumerate(codes)})
