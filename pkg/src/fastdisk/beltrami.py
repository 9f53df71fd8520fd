"""Per-face Beltrami coefficients of piecewise-linear maps.

Maps are stored per vertex. Planar points are complex numbers; arrays of
shape ``(n, 2)`` are accepted and converted, and ``(n, 3)`` arrays are
treated as surfaces in R^3 whose faces get flattened one at a time by a
rigid motion before any derivative is taken.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DivisionByZero, FoldedFace, Unbounded

# |f_z| below this times the face's image/source size ratio is treated as zero
_DENOM_TOL = 1e-14


def as_complex(points):
    p = np.asarray(points)
    if np.iscomplexobj(p):
        return p.astype(complex).reshape(-1)
    p = p.astype(float)
    if p.ndim == 1:
        return p.astype(complex)
    if p.shape[1] == 3 and np.any(p[:, 2] != 0):
        raise ValueError("points have a non-zero z coordinate; use the lifted variants")
    return p[:, 0] + 1j * p[:, 1]


def is_spatial(points):
    p = np.asarray(points)
    return not np.iscomplexobj(p) and p.ndim == 2 and p.shape[1] == 3 and bool(np.any(p[:, 2] != 0))


def flatten_faces(points, faces):
    """Isometrically lay each face of a surface in the plane.

    First vertex at the origin, first edge along the positive real axis,
    third vertex in the upper half plane. Returns ``(n_faces, 3)`` complex.
    """
    p = np.asarray(points, dtype=float)
    if p.shape[1] == 2:
        p = np.column_stack([p, np.zeros(len(p))])
    a, b, c = p[faces[:, 0]], p[faces[:, 1]], p[faces[:, 2]]
    e1 = b - a
    e2 = c - a
    length = np.linalg.norm(e1, axis=1)
    x3 = np.einsum("ij,ij->i", e2, e1) / length
    y3 = np.linalg.norm(np.cross(e1, e2), axis=1) / length
    out = np.zeros(faces.shape, dtype=complex)
    out[:, 1] = length
    out[:, 2] = x3 + 1j * y3
    return out


def face_coords(points, faces):
    """Per-face complex corner coordinates; spatial meshes are flattened."""
    if is_spatial(points):
        return flatten_faces(points, faces)
    return as_complex(points)[faces]


def gradient_operators(zf):
    """Rows ``Dx``, ``Dy`` mapping corner values to the face gradient.

    ``zf`` holds per-face corner coordinates; the signed area is used so the
    operators are exact for either orientation.
    """
    a, b = zf.real, zf.imag
    area = signed_area(zf)
    two_a = 2.0 * area[:, None]
    dx = np.column_stack([b[:, 1] - b[:, 2], b[:, 2] - b[:, 0], b[:, 0] - b[:, 1]]) / two_a
    dy = np.column_stack([a[:, 2] - a[:, 1], a[:, 0] - a[:, 2], a[:, 1] - a[:, 0]]) / two_a
    return dx, dy, area


def signed_area(zf):
    e1 = zf[:, 1] - zf[:, 0]
    e2 = zf[:, 2] - zf[:, 0]
    return 0.5 * (e1.real * e2.imag - e1.imag * e2.real)


def jets_from_coords(zf, wf):
    """``(f_z, f_zbar)`` of the affine map taking corners ``zf`` to ``wf``."""
    dx, dy, _ = gradient_operators(zf)
    # translate so constant images give exactly zero
    wf = wf - wf[:, :1]
    fz = 0.5 * np.sum((dx - 1j * dy) * wf, axis=1)
    fzbar = 0.5 * np.sum((dx + 1j * dy) * wf, axis=1)
    return fz, fzbar


def mu_from_coords(zf, wf):
    fz, fzbar = jets_from_coords(zf, wf)
    src = np.max(np.abs(zf - np.roll(zf, 1, axis=1)), axis=1)
    img = np.max(np.abs(wf - np.roll(wf, 1, axis=1)), axis=1)
    bad = ~(np.abs(fz) > _DENOM_TOL * img / src)
    if bad.any():
        raise DivisionByZero(np.flatnonzero(bad))
    return fzbar / fz


def face_jets(source, faces, image):
    """Per-face ``(f_z, f_zbar)`` of a planar-to-planar PL map."""
    faces = np.asarray(faces)
    return jets_from_coords(face_coords(source, faces), as_complex(image)[faces])


def face_beltrami_planar(source, faces, image):
    """Beltrami coefficient of the PL map ``source -> image`` on each face.

    Exact for affine-per-face maps: ``w = a z + b zbar`` gives ``b / a``.
    """
    faces = np.asarray(faces)
    return mu_from_coords(as_complex(source)[faces], as_complex(image)[faces])


def face_beltrami_lifted(source, faces, target):
    """Beltrami coefficient of a map from a planar mesh onto a surface in R^3.

    Each target face is flattened by a rigid motion; rigid motions are
    conformal so the result does not depend on how the face was placed.
    """
    faces = np.asarray(faces)
    return mu_from_coords(as_complex(source)[faces], flatten_faces(target, faces))


def beltrami_coefficient(source, faces, image):
    """Dispatch on dimensionality of ``source`` and ``image``."""
    faces = np.asarray(faces)
    zf = face_coords(source, faces)
    wf = flatten_faces(image, faces) if is_spatial(image) else as_complex(image)[faces]
    return mu_from_coords(zf, wf)


def inverse_beltrami(forward, faces, source, strict=True):
    """Beltrami coefficient of the inverse of the PL map ``source -> forward``.

    Computed by swapping the roles of source and image on each face, which
    is exact for PL maps. The field lives on the image faces (same face
    indexing). With ``strict`` a face where the forward map reverses
    orientation raises :class:`FoldedFace`.
    """
    faces = np.asarray(faces)
    mu = beltrami_coefficient(forward, faces, source)
    if strict:
        folded = np.flatnonzero(~(np.abs(mu) < 1))
        if len(folded):
            raise FoldedFace(folded)
    return mu


def inverse_beltrami_analytic(mu_f, fz):
    """``mu_{f^-1} o f = -(f_z / |f_z|)^2 mu_f``."""
    return -((fz / np.abs(fz)) ** 2) * mu_f


def compose_beltrami(mu_f, fz, mu_g_pulled):
    """Beltrami coefficient of ``g o f`` from ``mu_f``, ``f_z`` and ``mu_g o f``."""
    mu_f = np.asarray(mu_f, dtype=complex)
    mu_g = np.asarray(mu_g_pulled, dtype=complex)
    rot = np.conj(fz) / fz
    den = 1 + rot * np.conj(mu_f) * mu_g
    bad = ~(np.abs(den) > 1e-14)
    if bad.any():
        raise DivisionByZero(np.flatnonzero(bad))
    return (mu_f + rot * mu_g) / den


def maximal_dilation(mu):
    """``K = (1 + ||mu||_inf) / (1 - ||mu||_inf)``."""
    m = float(np.max(np.abs(mu))) if len(mu) else 0.0
    if m >= 1:
        raise Unbounded(f"max |mu| = {m:.6g} >= 1")
    return (1 + m) / (1 - m)


def jacobian(fz, mu):
    return np.abs(fz) ** 2 * (1 - np.abs(mu) ** 2)


def save_field_csv(mu, path):
    """``face_index,re,im`` rows at 17 significant digits."""
    with open(path, "w") as fh:
        fh.write("face_index,re,im\n")
        for i, m in enumerate(np.asarray(mu, dtype=complex)):
            fh.write(f"{i},{m.real:.17g},{m.imag:.17g}\n")


def load_field_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = np.zeros(int(data[:, 0].max()) + 1 if len(data) else 0, dtype=complex)
    out[data[:, 0].astype(int)] = data[:, 1] + 1j * data[:, 2]
    return out
