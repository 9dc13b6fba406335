"""Few-shot and zero-shot linear-embedding pipelines.

Few-shot: regress one-hot label embeddings on features and predict by the
argmax of x B.  Zero-shot: learn the class structure by regressing target
semantic vectors on source semantic vectors, transfer it to feature space
by synthesizing target prototypes from source prototypes, and classify by
nearest prototype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import lasso_fit, ridge_fit
from .matrices import MatrixError, as_matrix
from .solver import Hyperparams, PathPoint, Problem, run_path, select_t_cv

FIT_METHODS = ("msplit_dense", "msplit_sparse", "lasso", "ridge")


@dataclass(frozen=True)
class LabeledFeatures:
    X: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        object.__setattr__(self, "X", as_matrix(self.X, "X"))
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.size != self.X.shape[0]:
            raise ValueError("labels must be one integer per feature row")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError("label out of range")


@dataclass(frozen=True)
class PrototypeSet:
    F: np.ndarray  # one row per class

    def __post_init__(self):
        object.__setattr__(self, "F", as_matrix(self.F, "F"))


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.ndim != 1:
        raise ValueError("labels must be a 1-D integer vector")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("label out of range")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def fit_embedding(X, E, method: str, **params) -> np.ndarray:
    """Learn B with E ~ X B by the chosen estimator.

    For the msplit methods, ``t`` selects an explicit path position;
    otherwise t is chosen by ``folds``-fold cross-validation (default 5).
    Additional msplit params: kappa, nu, t_max, seed.
    """
    X = as_matrix(X, "X")
    E = as_matrix(E, "E")
    if X.shape[0] != E.shape[0]:
        raise MatrixError("X and E row counts differ")
    if method == "ridge":
        return ridge_fit(X, E, params.get("lam", 1e-6))
    if method == "lasso":
        return lasso_fit(X, E, params.get("lam", 0.01))
    if method not in ("msplit_dense", "msplit_sparse"):
        raise ValueError(f"unknown method {method!r}")

    hyper = Hyperparams(
        kappa=params.get("kappa", 5.0),
        nu=params.get("nu", 3.0),
        t_max=params.get("t_max", 20.0),
    )
    problem = Problem(X, E, hyper)
    if "t" in params:
        t_star = float(params["t"])
    else:
        folds = params.get("folds", 5)
        cv = select_t_cv(problem, folds=folds, seed=params.get("seed", 0))
        t_star = cv.t
    path = run_path(problem)
    idx = int(np.argmin(np.abs(path.t_grid - t_star)))
    pt = path.points[idx]
    return pt.B if method == "msplit_dense" else pt.Btilde


def predict_fsl(B, x) -> int:
    """Class of a single feature vector: argmax of x B (ties to smallest)."""
    B = as_matrix(B, "B")
    x = np.asarray(x, dtype=float).ravel()
    if x.size != B.shape[0]:
        raise MatrixError("feature length must match embedding rows")
    return int(np.argmax(x @ B))


def fsl_accuracy(B, X, labels) -> float:
    X = as_matrix(X, "X")
    labels = np.asarray(labels, dtype=int)
    pred = np.argmax(X @ as_matrix(B, "B"), axis=1)
    return float(np.mean(pred == labels))


def class_prototypes(data: LabeledFeatures) -> PrototypeSet:
    """Per-class mean feature vectors."""
    protos = np.empty((data.n_classes, data.X.shape[1]))
    for k in range(data.n_classes):
        mask = data.labels == k
        if not mask.any():
            raise ValueError(f"class {k} has no samples")
        protos[k] = data.X[mask].mean(axis=0)
    return PrototypeSet(F=protos)


def synthesize_prototypes(source: PrototypeSet, B) -> PrototypeSet:
    """Target prototype j = sum_k B[k, j] * source prototype k."""
    B = as_matrix(B, "B")
    if B.shape[0] != source.F.shape[0]:
        raise MatrixError("B rows must equal the number of source classes")
    return PrototypeSet(F=B.T @ source.F)


def predict_zsl(x, prototypes: PrototypeSet) -> int:
    """Index of the nearest prototype in Euclidean distance (ties to smallest)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != prototypes.F.shape[1]:
        raise MatrixError("feature length must match prototype dimension")
    dists = np.linalg.norm(prototypes.F - x, axis=1)
    return int(np.argmin(dists))


def zsl_accuracy(X, labels, prototypes: PrototypeSet) -> float:
    X = as_matrix(X, "X")
    labels = np.asarray(labels, dtype=int)
    d2 = np.sum((X[:, None, :] - prototypes.F[None, :, :]) ** 2, axis=2)
    pred = np.argmin(d2, axis=1)
    return float(np.mean(pred == labels))


def learn_structure(E_source, E_target, method: str = "msplit_dense", **params) -> np.ndarray:
    """Regress target-class semantic vectors on the source classes.

    ``E_source`` is Ks x q, ``E_target`` Kt x q (shared semantic dimension
    q).  Returns the Ks x Kt structure matrix B with E_target ~= B^T E_source
    row-wise, i.e. each target class as a combination of source classes.
    """
    E_source = as_matrix(E_source, "E_source")
    E_target = np.asarray(E_target, dtype=float)
    if E_target.ndim != 2:
        raise MatrixError("E_target must be 2-D")
    if E_target.shape[0] == 0:
        return np.zeros((E_source.shape[0], 0))
    if E_source.shape[1] != E_target.shape[1]:
        raise MatrixError("semantic dimensions differ between domains")
    return fit_embedding(E_source.T, E_target.T, method, **params)


@dataclass(frozen=True)
class ColumnSignals:
    column: int
    strong: list[tuple[int, float]]  # (source index, Btilde weight)
    weak: list[tuple[int, float]]  # (source index, B - Btilde value)


@dataclass(frozen=True)
class SignalReport:
    columns: list[ColumnSignals]


def signal_report(point: PathPoint, m: int) -> SignalReport:
    """Top-m strong and weak signals per target column at one path point.

    Strong signals are the largest |Btilde| entries (on the sparse support);
    weak signals the largest |B - Btilde| entries off the support.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    cols = []
    support = point.Gamma != 0.0
    resid = point.B - point.Btilde
    for j in range(point.B.shape[1]):
        strong_idx = np.nonzero(support[:, j])[0]
        strong_sorted = sorted(
            ((int(i), float(point.Btilde[i, j])) for i in strong_idx),
            key=lambda iv: (-abs(iv[1]), iv[0]),
        )[:m]
        weak_idx = np.nonzero(~support[:, j] & (resid[:, j] != 0.0))[0]
        weak_sorted = sorted(
            ((int(i), float(resid[i, j])) for i in weak_idx),
            key=lambda iv: (-abs(iv[1]), iv[0]),
        )[:m]
        cols.append(ColumnSignals(column=j, strong=strong_sorted, weak=weak_sorted))
    return SignalReport(columns=cols)


def signal_report_to_csv(report: SignalReport, fh) -> None:
    fh.write("target_class,kind,rank,source_index,weight\n")
    for col in report.columns:
        for rank, (idx, w) in enumerate(col.strong, start=1):
            fh.write(f"{col.column},strong,{rank},{idx},{w!r}\n")
        for rank, (idx, w) in enumerate(col.weak, start=1):
            fh.write(f"{col.column},weak,{rank},{idx},{w!r}\n")


def load_labels(path) -> np.ndarray:
    """One integer label per line."""
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError as exc:
                raise ValueError(f"{path}: non-integer label on line {lineno}") from exc
    if not labels:
        raise ValueError(f"{path}: no labels")
    return np.array(labels, dtype=int)
