"""Linear Beltrami solver: rebuild a quasi-conformal map from its Beltrami field."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .beltrami import face_coords, gradient_operators, signed_area
from .exceptions import KernelNotRemoved, NotPositiveDefinite, SingularCoefficient
from .linalg import DIRECT, SparseSystem, solve

MU_CLAMP = 1 - 1e-3


@dataclass(frozen=True)
class LbsCoefficients:
    alpha1: np.ndarray
    alpha2: np.ndarray
    alpha3: np.ndarray

    def matrices(self):
        """Per-face symmetric 2x2 coefficient matrices, shape ``(n_faces, 2, 2)``."""
        m = np.empty((len(self.alpha1), 2, 2))
        m[:, 0, 0] = self.alpha1
        m[:, 0, 1] = m[:, 1, 0] = self.alpha2
        m[:, 1, 1] = self.alpha3
        return m


def clamp_mu(mu, bound=MU_CLAMP):
    """Scale any ``|mu| > bound`` back to ``bound``, keeping its argument."""
    mu = np.asarray(mu, dtype=complex)
    r = np.abs(mu)
    over = r > bound
    if not over.any():
        return mu
    out = mu.copy()
    out[over] *= bound / r[over]
    return out


def lbs_coefficients(mu, clamp=MU_CLAMP):
    """Coefficients ``alpha_1..3`` of the elliptic operator for each face."""
    mu = clamp_mu(mu, clamp) if clamp is not None else np.asarray(mu, dtype=complex)
    rho, eta = mu.real, mu.imag
    den = 1 - rho**2 - eta**2
    if np.any(den <= 0):
        raise SingularCoefficient(f"|mu| >= 1 on {int(np.sum(den <= 0))} faces")
    a1 = ((rho - 1) ** 2 + eta**2) / den
    a2 = -2 * eta / den
    a3 = (1 + 2 * rho + rho**2 + eta**2) / den
    return LbsCoefficients(a1, a2, a3)


def assemble(zf, faces, coeffs, n_vertices):
    """Stiffness matrix ``sum_T area(T) grad(phi_k)^T A_T grad(phi_l)``.

    The area is signed. On a positively oriented domain this is the usual
    SPD stiffness matrix; when a few faces are turned over (Moebius images of
    a mesh) the signed form still reproduces affine maps exactly.
    """
    dx, dy, area = gradient_operators(zf)
    a1, a2, a3 = coeffs.alpha1[:, None], coeffs.alpha2[:, None], coeffs.alpha3[:, None]
    # A_T grad(phi_l)
    mx = a1 * dx + a2 * dy
    my = a2 * dx + a3 * dy
    w = area[:, None, None]
    local = w * (dx[:, :, None] * mx[:, None, :] + dy[:, :, None] * my[:, None, :])
    rows = np.repeat(faces, 3, axis=1).reshape(-1)
    cols = np.tile(faces, (1, 3)).reshape(-1)
    return sparse.csr_matrix((local.reshape(-1), (rows, cols)), shape=(n_vertices, n_vertices))


def assemble_cyclic(zf, faces, coeffs, n_vertices):
    """Same operator written with cyclic coordinate differences.

    For face ``[i, j, k]`` with corners ``g + i h`` the row of vertex ``i``
    uses ``(h_k - h_j)`` and ``(g_j - g_k)``; both equal twice the signed
    area times the hat-function gradient.
    """
    g, h = zf.real, zf.imag
    area = 0.5 * ((g[:, 1] - g[:, 0]) * (h[:, 2] - h[:, 0]) - (h[:, 1] - h[:, 0]) * (g[:, 2] - g[:, 0]))
    rows, cols, vals = [], [], []
    for r in range(3):
        j, k = (r + 1) % 3, (r + 2) % 3
        p_r = h[:, k] - h[:, j]
        q_r = g[:, j] - g[:, k]
        for c in range(3):
            jj, kk = (c + 1) % 3, (c + 2) % 3
            a_t = h[:, kk] - h[:, jj]
            b_t = g[:, jj] - g[:, kk]
            val = (p_r * (coeffs.alpha1 * a_t + coeffs.alpha2 * b_t) + q_r * (coeffs.alpha2 * a_t + coeffs.alpha3 * b_t))
            rows.append(faces[:, r])
            cols.append(faces[:, c])
            vals.append(val / (4 * area))
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_vertices, n_vertices)
    )


@dataclass
class BoundaryCondition:
    """Pinned vertices (both coordinates) and vertices whose imaginary part is fixed.

    A vertex may appear in both sets only if the imaginary values agree; the
    point pin then governs it.
    """

    point_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    point_value: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    imag_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    imag_value: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.point_index = np.asarray(self.point_index, dtype=np.int64).reshape(-1)
        self.point_value = np.asarray(self.point_value, dtype=complex).reshape(-1)
        self.imag_index = np.asarray(self.imag_index, dtype=np.int64).reshape(-1)
        self.imag_value = np.broadcast_to(np.asarray(self.imag_value, dtype=float), self.imag_index.shape).copy()
        if len(self.point_index) != len(self.point_value):
            raise ValueError("point_index and point_value differ in length")
        if not (np.all(np.isfinite(self.point_value)) and np.all(np.isfinite(self.imag_value))):
            raise ValueError("pinned values must be finite")
        if len(np.unique(self.point_index)) != len(self.point_index):
            raise ValueError("a vertex is point-pinned twice")
        if len(np.unique(self.imag_index)) != len(self.imag_index):
            raise ValueError("a vertex is imag-pinned twice")
        both, ip, ii = np.intersect1d(self.point_index, self.imag_index, return_indices=True)
        if len(both):
            if not np.allclose(self.point_value[ip].imag, self.imag_value[ii], rtol=0, atol=1e-12):
                raise ValueError("conflicting pins on the same vertex")
            keep = np.ones(len(self.imag_index), dtype=bool)
            keep[ii] = False
            self.imag_index = self.imag_index[keep]
            self.imag_value = self.imag_value[keep]
        if 2 * len(self.point_index) + len(self.imag_index) < 3:
            raise ValueError("at least three scalar constraints are needed to remove the kernel")

    @classmethod
    def pin_points(cls, index, value):
        return cls(point_index=index, point_value=value)

    def real_pins(self):
        return self.point_index, self.point_value.real

    def imag_pins(self):
        idx = np.concatenate([self.point_index, self.imag_index])
        val = np.concatenate([self.point_value.imag, self.imag_value])
        order = np.argsort(idx, kind="stable")
        return idx[order], val[order]


def _check_kernel(faces, n_vertices, pinned, label):
    used = np.zeros(n_vertices, dtype=bool)
    used[faces.reshape(-1)] = True
    pinned_mask = np.zeros(n_vertices, dtype=bool)
    pinned_mask[pinned] = True
    if np.any(~used & ~pinned_mask):
        raise KernelNotRemoved(f"{label}: vertex {np.flatnonzero(~used & ~pinned_mask)[0]} belongs to no face")
    ring = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    g = sparse.coo_matrix((np.ones(len(ring)), (ring[:, 0], ring[:, 1])), shape=(n_vertices, n_vertices))
    n_comp, labels = connected_components(g, directed=False)
    anchored = np.zeros(n_comp, dtype=bool)
    anchored[labels[pinned]] = True
    comps = np.unique(labels[used])
    if not np.all(anchored[comps]):
        raise KernelNotRemoved(f"{label}: a connected piece of the domain has no pinned vertex")


def lbs_system(vertices, faces, mu, clamp=MU_CLAMP):
    faces = np.asarray(faces, dtype=np.int64)
    n = len(vertices)
    zf = face_coords(vertices, faces)
    return assemble(zf, faces, lbs_coefficients(mu, clamp), n)


def lbs_solve(vertices, faces, mu, bc, method=DIRECT, rel_tol=1e-10, clamp=MU_CLAMP, return_matrix=False):
    """Quasi-conformal map of the planar domain with Beltrami field ``mu``.

    Parameters
    ----------
    vertices : complex array or (n, 2)/(n, 3) array
        Domain positions. Spatial domains are handled face by face in the
        rigid flattening chart; only ``mu = 0`` is chart independent there.
    faces : (n_faces, 3) int array
    mu : complex array, one value per face
    bc : BoundaryCondition

    Returns
    -------
    complex array, the image of every vertex.
    """
    faces = np.asarray(faces, dtype=np.int64)
    n = len(vertices)
    mu = np.asarray(mu, dtype=complex)
    if len(mu) != len(faces):
        raise ValueError("mu needs one value per face")
    a = lbs_system(vertices, faces, mu, clamp)
    ridx, rval = bc.real_pins()
    iidx, ival = bc.imag_pins()
    _check_kernel(faces, n, ridx, "real part")
    _check_kernel(faces, n, iidx, "imaginary part")
    definite = bool(np.all(signed_area(face_coords(vertices, faces)) > 0))
    if not definite:
        # turned-over faces make the matrix indefinite: pivoted LU only
        method = DIRECT
    zero = np.zeros(n)
    try:
        if np.array_equal(ridx, iidx):
            xy = solve(
                SparseSystem(a, np.zeros((n, 2)), ridx, np.column_stack([rval, ival])), method, rel_tol, definite=definite
            )
            out = xy[:, 0] + 1j * xy[:, 1]
        else:
            u = solve(SparseSystem(a, zero, ridx, rval), method, rel_tol, definite=definite)
            v = solve(SparseSystem(a, zero, iidx, ival), method, rel_tol, definite=definite)
            out = u + 1j * v
    except NotPositiveDefinite as exc:
        raise KernelNotRemoved(str(exc)) from exc
    return (out, a) if return_matrix else out


def lbs_residual(matrix, z, bc):
    """Max equation residual at unconstrained entries of each coordinate."""
    n = matrix.shape[0]
    r_u = matrix @ z.real
    r_v = matrix @ z.imag
    free_u = np.ones(n, dtype=bool)
    free_u[bc.real_pins()[0]] = False
    free_v = np.ones(n, dtype=bool)
    free_v[bc.imag_pins()[0]] = False
    ru = np.max(np.abs(r_u[free_u])) if free_u.any() else 0.0
    rv = np.max(np.abs(r_v[free_v])) if free_v.any() else 0.0
    return float(max(ru, rv))
