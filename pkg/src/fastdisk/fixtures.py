"""Generated disk-topology meshes used by the tests, the acceptance suite and the CLI demo."""

from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay

from .mesh import TriangleMesh

_GOLDEN = np.pi * (3 - np.sqrt(5))


def _orient_ccw(points2d, tri):
    p = points2d
    a, b, c = p[tri[:, 0]], p[tri[:, 1]], p[tri[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    tri = tri.copy()
    flip = cross < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def disk_points(n_faces, jitter=0.0, seed=0):
    """Sunflower samples of the unit disk with an evenly spaced boundary ring.

    Delaunay on these points gives roughly ``n_faces`` faces.
    """
    n_total = max(int(n_faces / 2) + 2, 4)
    n_bnd = max(int(round(np.sqrt(np.pi * n_total) * 1.1)), 3)
    n_int = max(n_total - n_bnd, 0)
    h = 2 * np.pi / n_bnd
    k = np.arange(n_int) + 0.5
    r = np.sqrt(k / n_int) * (1 - 0.6 * h) if n_int else k
    th = k * _GOLDEN
    interior = np.column_stack([r * np.cos(th), r * np.sin(th)])
    if jitter and n_int:
        rng = np.random.default_rng(seed)
        interior += rng.uniform(-jitter * h, jitter * h, interior.shape) * 0.5
        rr = np.linalg.norm(interior, axis=1)
        over = rr > 1 - 0.6 * h
        interior[over] *= ((1 - 0.6 * h) / rr[over])[:, None]
    t = 2 * np.pi * np.arange(n_bnd) / n_bnd
    boundary = np.column_stack([np.cos(t), np.sin(t)])
    return np.vstack([boundary, interior])


def _triangulate(points2d):
    tri = Delaunay(points2d, qhull_options="Qbb Qc Qz Q12").simplices
    return _orient_ccw(points2d, tri.astype(np.int64))


def flat_disk(n_faces=200, jitter=0.0, seed=0):
    p = disk_points(n_faces, jitter, seed)
    return TriangleMesh(p, _triangulate(p))


def hemisphere(n_faces=10000, radius=1.0):
    """Upper hemisphere; disk samples placed by equal-distance azimuthal mapping."""
    p = disk_points(n_faces)
    f = _triangulate(p)
    r = np.linalg.norm(p, axis=1)
    th = np.arctan2(p[:, 1], p[:, 0])
    polar = r * np.pi / 2
    v = radius * np.column_stack([np.sin(polar) * np.cos(th), np.sin(polar) * np.sin(th), np.cos(polar)])
    return TriangleMesh(v, f)


def bumpy_hemisphere(n_faces=10000, amplitude=0.15, seed=0):
    """Hemisphere with a smooth radial bump pattern and a wavy rim."""
    p = disk_points(n_faces)
    f = _triangulate(p)
    r = np.linalg.norm(p, axis=1)
    th = np.arctan2(p[:, 1], p[:, 0])
    polar = r * np.pi / 2
    rad = 1 + amplitude * np.sin(5 * th) * np.sin(3 * polar) + 0.5 * amplitude * np.cos(2 * th) * polar
    v = np.column_stack([rad * np.sin(polar) * np.cos(th), rad * np.sin(polar) * np.sin(th), rad * np.cos(polar)])
    return TriangleMesh(v, f)


def saddle(n_faces=10000, stretch=2.5, height=0.6):
    """Stretched saddle ``z = height (x^2 - y^2)`` over a ``stretch x 1`` rectangle."""
    ny = max(int(np.sqrt(n_faces / (2 * stretch))), 2)
    nx = max(int(round(ny * stretch)), 2)
    xs = np.linspace(-1, 1, nx + 1)
    ys = np.linspace(-1, 1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    # alternate the diagonal so the patch has no preferred direction
    par = ((np.arange(ny)[:, None] + np.arange(nx)[None, :]) % 2).ravel().astype(bool)
    f1 = np.where(par[:, None], np.column_stack([a, b, c]), np.column_stack([a, b, d]))
    f2 = np.where(par[:, None], np.column_stack([a, c, d]), np.column_stack([b, c, d]))
    faces = np.vstack([f1, f2])
    x = gx.ravel() * stretch
    y = gy.ravel()
    v = np.column_stack([x, y, height * (gx.ravel() ** 2 - gy.ravel() ** 2)])
    return TriangleMesh(v, faces)


def fan(n=6, radius=1.0, center_z=0.0):
    """Centre vertex 0 joined to a regular ``n``-gon ``1..n``."""
    t = 2 * np.pi * np.arange(n) / n
    v = np.vstack([[0.0, 0.0, center_z], np.column_stack([radius * np.cos(t), radius * np.sin(t), np.zeros(n)])])
    f = [[0, 1 + i, 1 + (i + 1) % n] for i in range(n)]
    return TriangleMesh(v, f)


def single_triangle(points=((0, 0, 0), (1, 0, 0), (0, 1, 0))):
    return TriangleMesh(np.asarray(points, dtype=float), [[0, 1, 2]])


def unit_square():
    return TriangleMesh([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])


def tetrahedron():
    v = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]
    f = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]
    return v, f


def square_annulus():
    """Square ring: outer square 0..3, inner square 4..7, 8 faces, two boundary loops."""
    v = [[-2, -2, 0], [2, -2, 0], [2, 2, 0], [-2, 2, 0], [-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0]]
    f = []
    for i in range(4):
        j = (i + 1) % 4
        f.append([i, j, 4 + j])
        f.append([i, 4 + j, 4 + i])
    return v, f


def random_pl_map(mesh, max_mu=0.6, amplitude=0.3, seed=0, max_tries=200):
    """Random orientation-preserving PL map of a planar mesh.

    Starts from a random affine map and perturbs interior vertices, halving
    the perturbation until every face has ``|mu| < max_mu``.
    """
    from .beltrami import face_beltrami_planar

    rng = np.random.default_rng(seed)
    z = mesh.vertices[:, 0] + 1j * mesh.vertices[:, 1]
    for _ in range(max_tries):
        b = (rng.uniform(0, 0.45) * np.exp(2j * np.pi * rng.uniform()))
        a = rng.uniform(0.5, 2.0) * np.exp(2j * np.pi * rng.uniform())
        w = a * z + a * b * np.conj(z) + complex(*rng.normal(size=2))
        edge = np.median(np.abs(z[mesh.faces[:, 0]] - z[mesh.faces[:, 1]]))
        pert = (rng.normal(size=len(z)) + 1j * rng.normal(size=len(z))) * amplitude * edge * abs(a)
        pert[mesh.boundary] = 0
        for _ in range(30):
            g = w + pert
            mu = face_beltrami_planar(z, mesh.faces, g)
            if np.max(np.abs(mu)) < max_mu:
                return g
            pert *= 0.5
    raise RuntimeError("could not draw a map within the requested |mu| bound")
