"""MSplit LBI: variable-split linearized Bregman iteration.

The solver minimizes the split loss

    L(B, Gamma) = loss_scale * ||X B - E||_F^2 + (1 / (2 nu)) * ||B - Gamma||_F^2

by a damped gradient step on the dense iterate ``B``, a dual gradient step on
``Z`` followed by soft-thresholding into the sparse iterate ``Gamma``, and a
projection of ``B`` onto the support of ``Gamma`` giving ``Btilde``.  Running
the iteration yields a regularization path indexed by t = k * alpha; the
sparse estimator selects strong signals while the dense one also retains the
weak ones.

``loss_scale`` defaults to 1/(2N) so that the data-fit gradient is
(1/N) X^T (X B - E) and lambda-style parameters are comparable across sample
sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from numba import njit

from .matrices import MatrixError, as_matrix, format_float, spectral_norm


class SolverError(RuntimeError):
    """Operational solver failure."""


class DivergenceError(SolverError):
    """Non-finite values appeared during iteration (step size too large)."""


@dataclass(frozen=True)
class Hyperparams:
    """Knobs of the iteration.

    ``alpha=None`` means "use the stability-bound step size"; an explicit
    value is validated against that bound when a Problem is built.
    ``record_every=None`` picks a schedule of roughly 500 recorded points.
    ``loss_scale=None`` means the canonical 1/(2N).
    """

    kappa: float = 5.0
    nu: float = 3.0
    t_max: float = 10.0
    alpha: float | None = None
    record_every: int | None = None
    loss_scale: float | None = None

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive when given")
        if self.record_every is not None and self.record_every < 1:
            raise ValueError("record_every must be a positive integer")
        if self.loss_scale is not None and self.loss_scale <= 0:
            raise ValueError("loss_scale must be positive")


def default_step_size(X, nu: float, kappa: float, loss_scale: float | None = None) -> float:
    """Largest stable step size alpha = nu / (kappa^2 (2 + nu * L_H)).

    ``L_H`` is the spectral bound of the data-fit Hessian,
    2 * loss_scale * ||X^T X||_2.
    """
    X = as_matrix(X, "X")
    if nu <= 0 or kappa <= 0:
        raise ValueError("nu and kappa must be positive")
    if loss_scale is None:
        loss_scale = 1.0 / (2.0 * X.shape[0])
    lam_h = 2.0 * loss_scale * spectral_norm(X) ** 2
    return nu / (kappa**2 * (2.0 + nu * lam_h))


@dataclass
class Problem:
    """A multi-response regression instance E ~ X B with solver hyperparams."""

    X: np.ndarray
    E: np.ndarray
    hyper: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        self.X = as_matrix(self.X, "X")
        self.E = as_matrix(self.E, "E")
        if self.X.shape[0] != self.E.shape[0]:
            raise MatrixError(
                f"X has {self.X.shape[0]} rows but E has {self.E.shape[0]}"
            )
        if self.hyper.alpha is not None:
            bound = default_step_size(
                self.X, self.hyper.nu, self.hyper.kappa, self.loss_scale
            )
            if self.hyper.alpha > bound * (1.0 + 1e-9):
                raise ValueError(
                    f"alpha={self.hyper.alpha:g} exceeds the stability bound {bound:g}"
                )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.E.shape[1]

    @property
    def loss_scale(self) -> float:
        if self.hyper.loss_scale is not None:
            return self.hyper.loss_scale
        return 1.0 / (2.0 * self.n)

    @cached_property
    def alpha(self) -> float:
        if self.hyper.alpha is not None:
            return self.hyper.alpha
        return default_step_size(self.X, self.hyper.nu, self.hyper.kappa, self.loss_scale)

    @property
    def record_every(self) -> int:
        if self.hyper.record_every is not None:
            return self.hyper.record_every
        return max(1, int(self.hyper.t_max / (500.0 * self.alpha)))

    # Precomputed pieces of the data-fit gradient 2*loss_scale*X^T(XB - E).
    @cached_property
    def _gram2(self) -> np.ndarray:
        return (2.0 * self.loss_scale) * (self.X.T @ self.X)

    @cached_property
    def _xte2(self) -> np.ndarray:
        return (2.0 * self.loss_scale) * (self.X.T @ self.E)

    def split_loss(self, B, Gamma) -> float:
        """The split objective L(B, Gamma)."""
        r = self.X @ B - self.E
        return float(
            self.loss_scale * np.sum(r * r)
            + np.sum((B - Gamma) ** 2) / (2.0 * self.hyper.nu)
        )


@dataclass(frozen=True)
class SolverState:
    B: np.ndarray
    Z: np.ndarray
    Gamma: np.ndarray
    Btilde: np.ndarray
    k: int
    t: float


@dataclass(frozen=True)
class PathPoint:
    t: float
    B: np.ndarray
    Gamma: np.ndarray
    Btilde: np.ndarray


@dataclass(frozen=True)
class Path:
    points: list[PathPoint]
    hyper: Hyperparams
    alpha: float
    record_every: int

    @property
    def t_grid(self) -> np.ndarray:
        return np.array([pt.t for pt in self.points])


@dataclass(frozen=True)
class Decomposition:
    """Orthogonal split of a dense iterate into strong / weak / noise parts."""

    strong: np.ndarray
    weak: np.ndarray
    noise: np.ndarray
    tau: float


def soft_threshold(z, lam: float) -> np.ndarray:
    """Elementwise shrinkage sign(z) * max(|z| - lam, 0)."""
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def grad_b(problem: Problem, B, Gamma) -> np.ndarray:
    """Gradient of the split loss in B: 2*ls*X^T(XB-E) + (B-Gamma)/nu."""
    B = np.asarray(B, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    if B.shape != (problem.d, problem.p) or Gamma.shape != B.shape:
        raise MatrixError("B and Gamma must both be d x p")
    return problem._gram2 @ B - problem._xte2 + (B - Gamma) / problem.hyper.nu


def grad_gamma(problem: Problem, B, Gamma) -> np.ndarray:
    """Gradient of the split loss in Gamma: (Gamma - B)/nu."""
    B = np.asarray(B, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    if B.shape != (problem.d, problem.p) or Gamma.shape != B.shape:
        raise MatrixError("B and Gamma must both be d x p")
    return (Gamma - B) / problem.hyper.nu


def init_state(problem: Problem) -> SolverState:
    """All-zero initial state (B0 = Z0 = Gamma0 = Btilde0 = 0)."""
    z = np.zeros((problem.d, problem.p))
    return SolverState(B=z.copy(), Z=z.copy(), Gamma=z.copy(), Btilde=z.copy(), k=0, t=0.0)


def step(problem: Problem, state: SolverState) -> SolverState:
    """One MSplit LBI iteration; gradients are taken at the incoming state."""
    kappa = problem.hyper.kappa
    alpha = problem.alpha
    g_b = grad_b(problem, state.B, state.Gamma)
    g_g = grad_gamma(problem, state.B, state.Gamma)
    B = state.B - kappa * alpha * g_b
    Z = state.Z - alpha * g_g
    Gamma = kappa * soft_threshold(Z, 1.0)
    Btilde = np.where(Gamma != 0.0, B, 0.0)
    if not (np.all(np.isfinite(B)) and np.all(np.isfinite(Z))):
        raise DivergenceError(
            f"non-finite iterate at k={state.k + 1}; reduce the step size"
        )
    k = state.k + 1
    return SolverState(B=B, Z=Z, Gamma=Gamma, Btilde=Btilde, k=k, t=k * alpha)


@njit(cache=True, nogil=True)
def _path_kernel(G2, c2, kappa, alpha, inv_nu, n_steps, record_every, max_support):
    """Run the iteration, recording every ``record_every`` steps plus the end.

    Stops early once every column's support reaches ``max_support`` nonzeros
    (pass 0 to disable).  Returns (B records, Gamma records, recorded k, ok).
    """
    d, p = c2.shape
    B = np.zeros((d, p))
    Z = np.zeros((d, p))
    Gam = np.zeros((d, p))
    n_rec_max = n_steps // record_every + 2
    rec_b = np.empty((n_rec_max, d, p))
    rec_g = np.empty((n_rec_max, d, p))
    rec_k = np.empty(n_rec_max, np.int64)
    n_rec = 0
    ok = True
    ka = kappa * alpha
    for k in range(1, n_steps + 1):
        R = np.dot(G2, B) - c2
        D = (B - Gam) * inv_nu
        B = B - ka * (R + D)
        Z = Z + alpha * D
        Gam = kappa * (np.sign(Z) * np.maximum(np.abs(Z) - 1.0, 0.0))
        on_grid = k % record_every == 0
        record = on_grid or k == n_steps
        stop = False
        if max_support > 0 and on_grid:
            full = True
            for j in range(p):
                cnt = 0
                for i in range(d):
                    if Gam[i, j] != 0.0:
                        cnt += 1
                if cnt < max_support:
                    full = False
                    break
            if full:
                record = True
                stop = True
        if record:
            rec_b[n_rec] = B
            rec_g[n_rec] = Gam
            rec_k[n_rec] = k
            n_rec += 1
            if not np.all(np.isfinite(B)):
                ok = False
                break
            if stop:
                break
    return rec_b[:n_rec], rec_g[:n_rec], rec_k[:n_rec], ok


@njit(cache=True, nogil=True)
def _first_activation_kernel(G2, c2, kappa, alpha, inv_nu, max_steps):
    """Iteration count at which Gamma first becomes nonzero, or -1."""
    d, p = c2.shape
    B = np.zeros((d, p))
    Z = np.zeros((d, p))
    Gam = np.zeros((d, p))
    ka = kappa * alpha
    for k in range(1, max_steps + 1):
        R = np.dot(G2, B) - c2
        D = (B - Gam) * inv_nu
        B = B - ka * (R + D)
        Z = Z + alpha * D
        for i in range(d):
            for j in range(p):
                if abs(Z[i, j]) > 1.0:
                    return k
        Gam = kappa * (np.sign(Z) * np.maximum(np.abs(Z) - 1.0, 0.0))
        if not np.isfinite(B[0, 0]):
            return -2
    return -1


def first_activation_time(problem: Problem, max_steps: int = 20_000_000) -> float:
    """t at which the sparse support first becomes nonempty."""
    k = _first_activation_kernel(
        problem._gram2,
        problem._xte2,
        problem.hyper.kappa,
        problem.alpha,
        1.0 / problem.hyper.nu,
        max_steps,
    )
    if k == -2:
        raise DivergenceError("non-finite iterate while scanning for activation")
    if k < 0:
        raise SolverError(f"support still empty after {max_steps} iterations")
    return k * problem.alpha


def run_path(problem: Problem, max_support_per_col: int | None = None) -> Path:
    """Iterate to t_max, recording the initial point, the schedule and the end."""
    alpha = problem.alpha
    record_every = problem.record_every
    n_steps = int(problem.hyper.t_max / alpha + 1e-9)
    d, p = problem.d, problem.p
    zero = np.zeros((d, p))
    points = [PathPoint(0.0, zero.copy(), zero.copy(), zero.copy())]
    if n_steps > 0:
        rec_b, rec_g, rec_k, ok = _path_kernel(
            problem._gram2,
            problem._xte2,
            problem.hyper.kappa,
            alpha,
            1.0 / problem.hyper.nu,
            n_steps,
            record_every,
            0 if max_support_per_col is None else int(max_support_per_col),
        )
        if not ok:
            raise DivergenceError("non-finite iterate during path run; reduce alpha")
        for i in range(rec_b.shape[0]):
            B = rec_b[i]
            Gam = rec_g[i]
            points.append(
                PathPoint(
                    t=float(rec_k[i]) * alpha,
                    B=B,
                    Gamma=Gam,
                    Btilde=np.where(Gam != 0.0, B, 0.0),
                )
            )
    return Path(points=points, hyper=problem.hyper, alpha=alpha, record_every=record_every)


def decompose(B, Btilde, tau: float | None = None) -> Decomposition:
    """Split B into strong (support of the sparse iterate), weak and noise.

    The residual off the sparse support is thresholded at ``tau``: entries
    with magnitude above tau are weak signals, the rest noise.  When ``tau``
    is None a robust scale estimate median(|residual|)/0.6745 over the
    off-support entries is used.
    """
    B = as_matrix(B, "B")
    Btilde = as_matrix(Btilde, "Btilde")
    if B.shape != Btilde.shape:
        raise MatrixError("B and Btilde must have equal shapes")
    if tau is not None and tau < 0:
        raise ValueError("tau must be nonnegative")
    strong = Btilde.copy()
    resid = B - Btilde
    if tau is None:
        off = np.abs(resid[Btilde == 0.0])
        tau = float(np.median(off) / 0.6745) if off.size else 0.0
    weak = np.where(np.abs(resid) > tau, resid, 0.0)
    noise = resid - weak
    return Decomposition(strong=strong, weak=weak, noise=noise, tau=float(tau))


@dataclass(frozen=True)
class CvResult:
    t: float
    which: str  # "dense" or "sparse"
    loss: float
    t_grid: np.ndarray
    mean_losses: np.ndarray  # shape (n_points, 2): dense, sparse


def select_t_cv(problem: Problem, folds: int, seed: int) -> CvResult:
    """Pick (t, estimator) minimizing k-fold held-out quadratic loss.

    All folds share one step size (the smallest stability bound across the
    training folds) so their recorded t grids coincide.  Ties break toward
    smaller t, dense before sparse.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if problem.n < folds:
        raise ValueError(f"need at least {folds} rows for {folds}-fold CV")
    rng = np.random.default_rng(seed)
    order = rng.permutation(problem.n)
    fold_idx = np.array_split(order, folds)
    if any(len(f) == 0 for f in fold_idx):
        raise ValueError("a fold would have zero rows")

    train_sets = []
    for f in fold_idx:
        mask = np.ones(problem.n, dtype=bool)
        mask[f] = False
        train_sets.append(np.nonzero(mask)[0])
    if any(len(tr) == 0 for tr in train_sets):
        raise ValueError("a training split would have zero rows")

    hyper = problem.hyper
    if hyper.alpha is not None:
        alpha = hyper.alpha
    else:
        alpha = min(
            default_step_size(
                problem.X[tr],
                hyper.nu,
                hyper.kappa,
                hyper.loss_scale,
            )
            for tr in train_sets
        )
    record_every = (
        hyper.record_every
        if hyper.record_every is not None
        else max(1, int(hyper.t_max / (500.0 * alpha)))
    )
    shared = replace(hyper, alpha=alpha, record_every=record_every)

    sums = None
    t_grid = None
    for f, tr in zip(fold_idx, train_sets):
        sub = Problem(problem.X[tr], problem.E[tr], shared)
        path = run_path(sub)
        X_val = problem.X[f]
        E_val = problem.E[f]
        scale = 1.0 / (2.0 * len(f))
        losses = np.empty((len(path.points), 2))
        for i, pt in enumerate(path.points):
            r_dense = X_val @ pt.B - E_val
            r_sparse = X_val @ pt.Btilde - E_val
            losses[i, 0] = scale * np.sum(r_dense * r_dense)
            losses[i, 1] = scale * np.sum(r_sparse * r_sparse)
        if sums is None:
            sums = losses
            t_grid = path.t_grid
        else:
            n_common = min(len(sums), len(losses))
            sums = sums[:n_common] + losses[:n_common]
            t_grid = t_grid[:n_common]
    mean_losses = sums / folds

    best = (np.inf, 0.0, "dense")
    for i in range(len(t_grid)):
        for j, which in enumerate(("dense", "sparse")):
            if mean_losses[i, j] < best[0]:
                best = (mean_losses[i, j], float(t_grid[i]), which)
    return CvResult(
        t=best[1], which=best[2], loss=float(best[0]), t_grid=t_grid, mean_losses=mean_losses
    )


def path_to_csv(path_obj: Path, fh) -> None:
    """Sparse CSV export: rows (t, column, row, B, Gamma, Btilde).

    An entry is emitted when any of B / Gamma / Btilde is nonzero at the
    recorded point or the entry changed since the previous recorded point.
    """
    fh.write("t,column_index,row_index,B_value,Gamma_value,Btilde_value\n")
    prev = None
    for pt in path_obj.points:
        mask = (pt.B != 0.0) | (pt.Gamma != 0.0) | (pt.Btilde != 0.0)
        if prev is not None:
            mask |= (pt.B != prev.B) | (pt.Gamma != prev.Gamma) | (pt.Btilde != prev.Btilde)
        rows, cols = np.nonzero(mask)
        for i, j in zip(rows, cols):
            fh.write(
                f"{format_float(pt.t)},{j},{i},"
                f"{format_float(pt.B[i, j])},{format_float(pt.Gamma[i, j])},"
                f"{format_float(pt.Btilde[i, j])}\n"
            )
        prev = pt


def path_to_json(path_obj: Path) -> dict:
    """Dense JSON export for small problems."""
    return {
        "alpha": path_obj.alpha,
        "record_every": path_obj.record_every,
        "points": [
            {
                "t": pt.t,
                "B": pt.B.tolist(),
                "Gamma": pt.Gamma.tolist(),
                "Btilde": pt.Btilde.tolist(),
            }
            for pt in path_obj.points
        ],
    }
