"""Thin interface to a conic solver for semidefinite feasibility problems.

The trainer expresses its program in the standard conic form

    minimize    c' x
    subject to  A x + s = b,   s in K

where ``K`` stacks (in this order) a zero cone, a nonnegative cone and a
sequence of semidefinite cones.  Semidefinite slacks use the scaled
lower-triangular vectorization: column-major lower triangle with
off-diagonal entries multiplied by ``sqrt(2)`` (so inner products of
vectorized matrices equal trace inner products).

Only the SCS backend is wired up; the problem container keeps the trainer
independent of the solver's calling convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class SolverError(RuntimeError):
    """Conic solve did not return a usable solution."""


@dataclass
class ConicProblem:
    """Standard-form conic program data."""

    a: sp.spmatrix
    b: np.ndarray
    c: np.ndarray
    psd_dims: list[int] = field(default_factory=list)
    zero_dim: int = 0
    nonneg_dim: int = 0

    def validate(self) -> None:
        rows = self.zero_dim + self.nonneg_dim + sum(
            d * (d + 1) // 2 for d in self.psd_dims
        )
        if self.a.shape[0] != rows or self.a.shape[0] != self.b.size:
            raise ValueError(
                f"cone sizes ({rows}) inconsistent with matrix rows ({self.a.shape})"
            )
        if self.a.shape[1] != self.c.size:
            raise ValueError("objective length inconsistent with matrix columns")


def svec_indices(dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row/column indices and scaling of the scaled lower-tri vectorization."""
    rows, cols = [], []
    for j in range(dim):
        for i in range(j, dim):
            rows.append(i)
            cols.append(j)
    rows = np.array(rows)
    cols = np.array(cols)
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, scale


def svec(mat: np.ndarray) -> np.ndarray:
    """Scaled lower-triangular vectorization of a symmetric matrix."""
    rows, cols, scale = svec_indices(mat.shape[0])
    return mat[rows, cols] * scale


def svec_inverse(vec: np.ndarray, dim: int) -> np.ndarray:
    """Symmetric matrix from its scaled lower-triangular vectorization."""
    rows, cols, scale = svec_indices(dim)
    out = np.zeros((dim, dim))
    out[rows, cols] = vec / scale
    out[cols, rows] = out[rows, cols]
    return out


def solve(problem: ConicProblem, backend: str = "clarabel", **settings) -> tuple[np.ndarray, dict]:
    """Solve a conic problem; returns (x, solver info).

    ``backend`` selects ``"clarabel"`` (interior point, the default: the
    training problems have few variables and thousands of small
    semidefinite blocks, where a direct method reaches high accuracy in a
    few dozen iterations) or ``"scs"`` (first-order splitting).  Extra
    keyword arguments pass through to the backend.

    Raises
    ------
    SolverError
        If the solver reports infeasibility, unboundedness or failure.
        An "almost solved"/"inaccurate" status is accepted (callers verify
        solution quality independently).
    """
    problem.validate()
    if backend == "scs":
        return _solve_scs(problem, **settings)
    if backend == "clarabel":
        return _solve_clarabel(problem, **settings)
    raise ValueError(f"unknown conic backend {backend!r}")


def _solve_scs(problem: ConicProblem, **settings) -> tuple[np.ndarray, dict]:
    import scs

    cone: dict = {}
    if problem.zero_dim:
        cone["z"] = problem.zero_dim
    if problem.nonneg_dim:
        cone["l"] = problem.nonneg_dim
    if problem.psd_dims:
        cone["s"] = list(problem.psd_dims)
    data = {
        "A": sp.csc_matrix(problem.a, dtype=float),
        "b": np.asarray(problem.b, dtype=float),
        "c": np.asarray(problem.c, dtype=float),
    }
    defaults = dict(verbose=False, eps_abs=1e-6, eps_rel=1e-6, max_iters=100_000)
    defaults.update(settings)
    solver = scs.SCS(data, cone, **defaults)
    result = solver.solve()
    status = result["info"]["status"].lower()
    if "solved" not in status:
        raise SolverError(f"conic solver status: {result['info']['status']}")
    return result["x"], dict(result["info"])


def _psd_row_permutation(dims: list[int]) -> np.ndarray:
    """Row permutation from this module's svec layout to clarabel's.

    Both scale off-diagonals by sqrt(2); this module stacks the lower
    triangle column-major, clarabel the upper triangle column-major.  For
    a symmetric matrix these enumerate the same entries in a different
    order, so each block's rows are permuted, not rescaled.
    """
    perm = []
    offset = 0
    for d in dims:
        my_index = {}
        k = 0
        for j in range(d):
            for i in range(j, d):
                my_index[(i, j)] = k
                k += 1
        for j in range(d):
            for i in range(j + 1):
                perm.append(offset + my_index[(j, i)])
        offset += d * (d + 1) // 2
    return np.array(perm, dtype=int)


def _solve_clarabel(problem: ConicProblem, **settings) -> tuple[np.ndarray, dict]:
    import clarabel

    head = problem.zero_dim + problem.nonneg_dim
    perm = np.concatenate(
        [np.arange(head), head + _psd_row_permutation(problem.psd_dims)]
    ).astype(int) if problem.psd_dims else np.arange(head)
    a = sp.csr_matrix(problem.a)[perm].tocsc()
    b = np.asarray(problem.b, dtype=float)[perm]

    cones: list = []
    if problem.zero_dim:
        cones.append(clarabel.ZeroConeT(problem.zero_dim))
    if problem.nonneg_dim:
        cones.append(clarabel.NonnegativeConeT(problem.nonneg_dim))
    cones.extend(clarabel.PSDTriangleConeT(d) for d in problem.psd_dims)

    cfg = clarabel.DefaultSettings()
    cfg.verbose = False
    # Large chained problems stall a hair above the (very tight) default
    # gap target once feasibility is already ~1e-9; accept that point as
    # reduced accuracy instead of reporting a numerical error.
    cfg.tol_gap_abs = 1e-7
    cfg.tol_gap_rel = 1e-7
    cfg.reduced_tol_gap_abs = 1e-3
    cfg.reduced_tol_gap_rel = 1e-3
    cfg.reduced_tol_feas = 1e-6
    for key, value in settings.items():
        setattr(cfg, key, value)
    n = problem.c.size
    p = sp.csc_matrix((n, n))
    solver = clarabel.DefaultSolver(
        p, np.asarray(problem.c, dtype=float), a, b, cones, cfg
    )
    sol = solver.solve()
    status = str(sol.status)
    if status not in ("Solved", "AlmostSolved"):
        raise SolverError(f"conic solver status: {status}")
    info = {
        "status": status,
        "iterations": sol.iterations,
        "obj_val": sol.obj_val,
        "solve_time": sol.solve_time,
    }
    return np.asarray(sol.x, dtype=float), info
