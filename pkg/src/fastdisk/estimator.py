"""scikit-learn style wrapper around the disk parameterisation pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .linalg import CG, DIRECT
from .mesh import TriangleMesh
from .pipeline import DEFAULT_EPSILON, DEFAULT_MAX_ITER, POLE_DISTORTION, POLE_NEAREST, run_pipeline


def check_mesh(X):
    """Coerce ``X`` to a validated :class:`TriangleMesh`.

    Accepts a mesh, or a ``(vertices, faces)`` pair with vertices of shape
    ``(n, 2)`` or ``(n, 3)`` and integer faces of shape ``(m, 3)``.
    """
    if isinstance(X, TriangleMesh):
        return X
    try:
        vertices, faces = X
    except (TypeError, ValueError):
        raise TypeError("expected a TriangleMesh or a (vertices, faces) pair") from None
    vertices = check_array(vertices, dtype=np.float64, ensure_min_samples=3)
    if vertices.shape[1] not in (2, 3):
        raise ValueError(f"vertices must have 2 or 3 columns, got {vertices.shape[1]}")
    faces = np.asarray(faces)
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise ValueError(f"faces must have shape (m, 3), got {faces.shape}")
    if not np.issubdtype(faces.dtype, np.integer):
        if not np.all(np.mod(faces, 1) == 0):
            raise ValueError("faces must hold integer vertex indices")
        faces = faces.astype(np.int64)
    return TriangleMesh(vertices, faces)


class DiskConformalMap(TransformerMixin, BaseEstimator):
    """Conformal map of a disk-type triangle mesh onto the unit disk.

    Parameters
    ----------
    epsilon : float
        Stop the reflection iterations once mean |mu| drops by less than this.
    max_iter : int
        Cap on reflection iterations.
    method : {"direct", "cg"}
        Linear solver.
    rel_tol : float
        Relative residual target for the solver.
    pole : {"distortion", "nearest"}
        Rule for placing the Cayley pole on the boundary.
    check_bijective : bool
        Raise :class:`~fastdisk.exceptions.BijectivityFailure` on flipped faces.

    Attributes
    ----------
    embedding_ : ndarray of shape (n_vertices, 2)
        Disk coordinates of the fitted mesh.
    report_ : QualityReport
    n_iter_ : int
        Reflection iterations performed.
    mesh_ : TriangleMesh
    """

    def __init__(
        self,
        epsilon=DEFAULT_EPSILON,
        max_iter=DEFAULT_MAX_ITER,
        method=DIRECT,
        rel_tol=1e-10,
        pole=POLE_DISTORTION,
        check_bijective=True,
    ):
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.method = method
        self.rel_tol = rel_tol
        self.pole = pole
        self.check_bijective = check_bijective

    def _validate_params(self):
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter!r}")
        if self.method not in (DIRECT, CG):
            raise ValueError(f"method must be {DIRECT!r} or {CG!r}, got {self.method!r}")
        if self.pole not in (POLE_DISTORTION, POLE_NEAREST):
            raise ValueError(f"pole must be {POLE_DISTORTION!r} or {POLE_NEAREST!r}, got {self.pole!r}")

    def _run(self, mesh):
        return run_pipeline(
            mesh,
            epsilon=self.epsilon,
            max_iter=int(self.max_iter),
            method=self.method,
            rel_tol=self.rel_tol,
            check=self.check_bijective,
            pole=self.pole,
        )

    def fit(self, X, y=None):
        self._validate_params()
        mesh = check_mesh(X)
        phi, report = self._run(mesh)
        self.mesh_ = mesh
        self.embedding_ = np.column_stack([phi.real, phi.imag])
        self.report_ = report
        self.n_iter_ = report.iterations
        return self

    def transform(self, X):
        """Disk coordinates of ``X``; reuses the fit when ``X`` is the fitted mesh."""
        check_is_fitted(self, "embedding_")
        mesh = check_mesh(X)
        if mesh is self.mesh_ or _same_mesh(mesh, self.mesh_):
            return self.embedding_.copy()
        phi, _ = self._run(mesh)
        return np.column_stack([phi.real, phi.imag])

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).embedding_.copy()

    def score(self, X, y=None):
        """Negative mean |mu| of the map of ``X`` (higher is better)."""
        from .metrics import compute_report

        mesh = check_mesh(X)
        uv = self.transform(mesh)
        return -compute_report(mesh, uv[:, 0] + 1j * uv[:, 1]).mean_mu


def _same_mesh(a, b):
    return (
        a.vertices.shape == b.vertices.shape
        and a.faces.shape == b.faces.shape
        and np.array_equal(a.faces, b.faces)
        and np.array_equal(a.vertices, b.vertices)
    )
