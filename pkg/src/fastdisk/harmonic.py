"""Cotangent weights and the arc-length disk harmonic map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .exceptions import DegenerateFace
from .linalg import DIRECT, SparseSystem, solve
from .mesh import boundary_edge_lengths


@dataclass(frozen=True)
class CotangentWeights:
    """``k_uv = sum of cot(angle opposite [u, v])`` over the faces holding the edge."""

    edges: np.ndarray  # (n_edges, 2), sorted rows
    weights: np.ndarray  # (n_edges,)
    n_vertices: int

    def __getitem__(self, uv):
        u, v = sorted(uv)
        hit = np.flatnonzero((self.edges[:, 0] == u) & (self.edges[:, 1] == v))
        if not len(hit):
            raise KeyError(uv)
        return float(self.weights[hit[0]])

    def laplacian(self):
        """``L[i, i] = sum_j k_ij`` and ``L[i, j] = -k_ij``; positive semidefinite."""
        n = self.n_vertices
        i, j = self.edges[:, 0], self.edges[:, 1]
        w = self.weights
        off = sparse.coo_matrix(
            (np.concatenate([-w, -w]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n)
        ).tocsr()
        diag = -np.asarray(off.sum(axis=1)).ravel()
        return (off + sparse.diags(diag)).tocsr()


def face_cotangents(vertices, faces):
    """Cotangent of the angle at each corner, shape ``(n_faces, 3)``.

    Column ``k`` is the angle at ``faces[:, k]``, i.e. opposite the edge
    ``(faces[:, k+1], faces[:, k+2])``.
    """
    v = np.asarray(vertices, dtype=float)
    if v.shape[1] == 2:
        v = np.column_stack([v, np.zeros(len(v))])
    cots = np.empty(faces.shape)
    for k in range(3):
        p = v[faces[:, k]]
        a = v[faces[:, (k + 1) % 3]] - p
        b = v[faces[:, (k + 2) % 3]] - p
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        dot = np.einsum("ij,ij->i", a, b)
        sin_rel = cross / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        bad = ~(sin_rel > 1e-14)
        if bad.any():
            raise DegenerateFace(np.flatnonzero(bad)[0], f"face {np.flatnonzero(bad)[0]} has an angle of 0 or pi")
        cots[:, k] = dot / cross
    return cots


def cotangent_weights(mesh):
    """Edge weights of the cotangent formula. Obtuse angles give negative terms; nothing is clamped."""
    f = np.asarray(mesh.faces)
    cots = face_cotangents(mesh.vertices, f)
    # edge opposite corner k joins corners k+1 and k+2
    ends = np.concatenate([f[:, [1, 2]], f[:, [2, 0]], f[:, [0, 1]]])
    vals = np.concatenate([cots[:, 0], cots[:, 1], cots[:, 2]])
    ends = np.sort(ends, axis=1)
    edges, inverse = np.unique(ends, axis=0, return_inverse=True)
    weights = np.bincount(inverse.reshape(-1), weights=vals, minlength=len(edges))
    return CotangentWeights(edges, weights, mesh.n_vertices)


def boundary_angles(lengths):
    """Arc-length angles ``theta_i = 2 pi s_i / s`` for consecutive boundary edge lengths."""
    lengths = np.asarray(lengths, dtype=float)
    if np.any(lengths <= 0):
        raise ValueError("boundary edge lengths must be positive")
    partial = np.concatenate([[0.0], np.cumsum(lengths[:-1])])
    return 2.0 * np.pi * partial / lengths.sum()


def harmonic_disk_map(mesh, weights=None, angles=None, method=DIRECT, rel_tol=1e-10):
    """Discrete harmonic map of ``mesh`` onto the unit disk.

    Boundary vertex ``v_i`` goes to ``exp(i theta_i)``; interior vertices solve
    the cotangent Laplace equation. Returns one complex coordinate per vertex.
    """
    if weights is None:
        weights = cotangent_weights(mesh)
    loop = mesh.boundary
    if angles is None:
        angles = boundary_angles(boundary_edge_lengths(mesh, loop))
    angles = np.asarray(angles, dtype=float)
    if len(angles) != len(loop):
        raise ValueError("one angle per boundary vertex is required")
    pins = np.column_stack([np.cos(angles), np.sin(angles)])
    system = SparseSystem(weights.laplacian(), np.zeros((mesh.n_vertices, 2)), loop, pins)
    xy = solve(system, method=method, rel_tol=rel_tol)
    return xy[:, 0] + 1j * xy[:, 1]


def harmonic_residual(weights, z, interior):
    """Max over interior vertices of ``|sum_v k_uv (f(u) - f(v))|``."""
    r = weights.laplacian() @ z
    return float(np.max(np.abs(r[interior]))) if np.any(interior) else 0.0
