"""Sparse SPD solves with pinned unknowns eliminated exactly."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
from scipy import sparse
from scipy.sparse import linalg as spla

from .exceptions import MaxIterations, NotPositiveDefinite

DIRECT = "direct"
CG = "cg"


@dataclass
class SparseSystem:
    """``A x = b`` with some unknowns fixed to given values.

    ``rhs`` may have a trailing axis to solve several right-hand sides that
    share the matrix and the pinned index set.
    """

    matrix: sparse.spmatrix
    rhs: np.ndarray
    pinned: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.matrix = sparse.csr_matrix(self.matrix)
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n):
            raise ValueError("matrix must be square")
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.rhs.shape[0] != n:
            raise ValueError("rhs length does not match matrix")
        self.pinned = np.asarray(self.pinned, dtype=np.int64).reshape(-1)
        vals = np.asarray(self.values, dtype=float)
        if self.rhs.ndim == 2 and vals.ndim == 1:
            vals = np.repeat(vals[:, None], self.rhs.shape[1], axis=1)
        self.values = vals
        if len(np.unique(self.pinned)) != len(self.pinned):
            raise ValueError("an unknown is pinned twice")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("pinned values must be finite")

    @property
    def n(self):
        return self.matrix.shape[0]

    @classmethod
    def from_constraints(cls, matrix, rhs, constraints):
        """Build from a ``{index: value}`` mapping."""
        idx = np.array(sorted(constraints), dtype=np.int64)
        vals = np.array([constraints[i] for i in idx], dtype=float)
        return cls(matrix, rhs, idx, vals)

    def asymmetry(self):
        a = self.matrix
        scale = abs(a).max() if a.nnz else 1.0
        return abs(a - a.T).max() / scale if a.nnz else 0.0

    def reduce(self):
        """Free-index set, reduced matrix and reduced right-hand side."""
        free = np.ones(self.n, dtype=bool)
        free[self.pinned] = False
        free_idx = np.flatnonzero(free)
        a = self.matrix
        a_ff = a[free_idx][:, free_idx]
        b_f = self.rhs[free_idx]
        if len(self.pinned):
            a_fc = a[free_idx][:, self.pinned]
            b_f = b_f - a_fc @ self.values
        return free_idx, a_ff.tocsc(), b_f


def _factorize(a, definite=True):
    n = a.shape[0]
    if n == 0:
        return None
    if not definite:
        try:
            return spla.splu(a, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NotPositiveDefinite(f"factorization failed: {exc}") from None
    try:
        # no pivoting + symmetric ordering: U's diagonal is the LDL^T pivot sequence
        lu = spla.splu(
            a,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise NotPositiveDefinite(f"factorization failed: {exc}") from None
    d = lu.U.diagonal()
    if not np.all(d > 0):
        raise NotPositiveDefinite(f"reduced matrix has {np.sum(~(d > 0))} non-positive pivots")
    return lu


def _relres(a, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(a @ x - b)
    return r / nb if nb > 0 else r


def solve(system, method=DIRECT, rel_tol=1e-10, max_iter=None, definite=True):
    """Solve ``system`` and return the full solution vector (or matrix).

    Pinned entries are copied verbatim into the output. The direct path
    applies a few rounds of iterative refinement if the first solve misses
    ``rel_tol``.
    """
    method = method.lower()
    free_idx, a, b = system.reduce()
    out = np.zeros(system.rhs.shape)
    out[system.pinned] = system.values
    if len(free_idx) == 0:
        return out

    if method == DIRECT:
        lu = _factorize(a, definite)
        x = lu.solve(b)
        for _ in range(3):
            if _relres(a, x, b) <= rel_tol:
                break
            x = x + lu.solve(b - a @ x)
    elif method == CG:
        x = _cg(a, b, rel_tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")

    if not np.all(np.isfinite(x)):
        raise NotPositiveDefinite("solution is not finite")
    out[free_idx] = x
    return out


def _cg(a, b, rel_tol, max_iter):
    n = a.shape[0]
    max_iter = 10 * n if max_iter is None else max_iter
    d = a.diagonal()
    if not np.all(d > 0):
        raise NotPositiveDefinite("matrix has non-positive diagonal entries")
    precond = sparse.diags(1.0 / d)
    cols = b.reshape(n, -1)
    x = np.zeros_like(cols)
    for k in range(cols.shape[1]):
        if not np.any(cols[:, k]):
            continue
        sol, info = spla.cg(a, cols[:, k], rtol=rel_tol, atol=0.0, maxiter=max_iter, M=precond)
        if info > 0:
            raise MaxIterations(f"CG did not reach rel_tol={rel_tol:g} within {max_iter} iterations")
        if info < 0:
            raise NotPositiveDefinite("CG breakdown")
        x[:, k] = sol
    return x.reshape(b.shape)


def dump_system(system, path):
    """Write the matrix in MatrixMarket coordinate format; rhs and pins alongside."""
    path = str(path)
    scipy.io.mmwrite(path, sparse.coo_matrix(system.matrix), precision=17)
    np.savetxt(path + ".rhs", np.atleast_2d(system.rhs.T).T, fmt="%.17g")
    np.savetxt(
        path + ".pins",
        np.column_stack([system.pinned, np.atleast_2d(system.values.T).T]) if len(system.pinned) else np.zeros((0, 2)),
        fmt="%.17g",
    )
