"""MSplit LBI: sparse + dense estimation along a single regularization path.

The package is organized as:

* :mod:`msplit_lbi.matrices` -- dense matrix helpers and the CSV/JSON file formats
* :mod:`msplit_lbi.solver`   -- the MSplit LBI iteration, path generation and
  cross-validated selection of the path parameter
* :mod:`msplit_lbi.baselines` -- OLS, ridge, lasso and elastic-net reference fits
* :mod:`msplit_lbi.simulation` -- synthetic-design benchmark and Monte-Carlo
  bias verifiers
* :mod:`msplit_lbi.embedding` -- few-shot / zero-shot linear-embedding pipelines
* :mod:`msplit_lbi.cli`      -- the ``msplit`` command line tool
"""

from .solver import (
    Hyperparams,
    Problem,
    SolverState,
    Path,
    PathPoint,
    Decomposition,
    soft_threshold,
    default_step_size,
    init_state,
    step,
    run_path,
    decompose,
    select_t_cv,
)

__all__ = [
    "Hyperparams",
    "Problem",
    "SolverState",
    "Path",
    "PathPoint",
    "Decomposition",
    "soft_threshold",
    "default_step_size",
    "init_state",
    "step",
    "run_path",
    "decompose",
    "select_t_cv",
]

__version__ = "0.1.0"
