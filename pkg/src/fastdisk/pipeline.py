"""Harmonic initialisation followed by the north pole / south pole corrections."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .beltrami import as_complex, inverse_beltrami, signed_area
from .exceptions import FaceSelectionError, NonDecreasingEnergy, OriginOnVertex, PoleError
from .harmonic import harmonic_disk_map
from .lbs import BoundaryCondition, lbs_solve
from .linalg import DIRECT

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-5
DEFAULT_MAX_ITER = 20
ENERGY_TOL = 1e-12
ORIGIN_TOL = 1e-12
RECENTER_STEP = 1e-6
POLE_DISTORTION = "distortion"
POLE_NEAREST = "nearest"


def cayley(z):
    """``W(z) = i (1 + z) / (1 - z)``, unit disk onto the upper half plane."""
    z = np.asarray(z, dtype=complex)
    if np.any(z == 1):
        raise PoleError("Cayley transform is singular at z = 1")
    out = 1j * (1 + z) / (1 - z)
    return out if out.ndim else complex(out)


def inverse_cayley(z):
    """``W^{-1}(z) = (z - i) / (z + i)``."""
    z = np.asarray(z, dtype=complex)
    if np.any(z == -1j):
        raise PoleError("inverse Cayley transform is singular at z = -i")
    out = (z - 1j) / (z + 1j)
    return out if out.ndim else complex(out)


def reflect(z):
    """Reflection across the unit circle, ``z -> 1 / conj(z)``."""
    return 1.0 / np.conj(np.asarray(z, dtype=complex))


def _ulp_steps(x, k):
    toward = np.inf if k > 0 else -np.inf
    for _ in range(abs(k)):
        x = np.nextafter(x, toward)
    return x


_STEPS = sorted(((i, j) for i in range(-3, 4) for j in range(-3, 4)), key=lambda p: (abs(p[0]) + abs(p[1]), p))


def project_to_circle(z):
    """``z / |z|``, moved by a few ulps where needed so that ``np.abs`` gives exactly 1."""
    w = np.atleast_1d(np.asarray(z, dtype=complex) / np.abs(z))
    off = np.flatnonzero(np.abs(w) != 1.0)
    x, y = w[off].real, w[off].imag
    done = np.zeros(len(off), dtype=bool)
    for dx, dy in _STEPS:
        if done.all():
            break
        cand = _ulp_steps(x, dx) + 1j * _ulp_steps(y, dy)
        hit = ~done & (np.abs(cand) == 1.0)
        w[off[hit]] = cand[hit]
        done |= hit
    return w if np.ndim(z) else w[0]


def mean_abs_mu(mesh, z):
    """Mean over faces of ``|mu|`` of the map ``phi^{-1}: phi(M) -> M``."""
    return float(np.mean(np.abs(inverse_beltrami(z, mesh.faces, mesh.vertices, strict=False))))


def _in_triangle(zf, target, tol):
    a, b, c = zf[:, 0], zf[:, 1], zf[:, 2]
    area = signed_area(zf)
    scale = np.abs(area) + 1e-300

    def cross(p, q, r):
        return ((q - p).real * (r - p).imag - (q - p).imag * (r - p).real)

    l0 = cross(target, b, c) / (2 * scale) * np.sign(area)
    l1 = cross(a, target, c) / (2 * scale) * np.sign(area)
    l2 = cross(a, b, target) / (2 * scale) * np.sign(area)
    return (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol) & (area != 0)


def select_face_near(z, mesh, target, candidates=None):
    """Face whose image contains ``target``, else the one with the nearest centroid.

    Ties go to the lowest face index. ``candidates`` optionally restricts the
    search to a subset of faces.
    """
    faces = np.asarray(mesh.faces if hasattr(mesh, "faces") else mesh)
    z = as_complex(z)
    ids = np.arange(len(faces)) if candidates is None else np.asarray(candidates)
    if len(ids) == 0:
        raise FaceSelectionError("no candidate faces")
    zf = z[faces[ids]]
    inside = np.flatnonzero(_in_triangle(zf, target, 1e-12))
    if len(inside):
        return int(ids[inside[0]])
    d = np.abs(zf.mean(axis=1) - target)
    return int(ids[np.flatnonzero(d == d.min())[0]])


@dataclass
class PipelineState:
    phi: np.ndarray
    iteration: int = 0
    previous_mean: float | None = None
    energy_trace: list = field(default_factory=list)
    stage_names: list = field(default_factory=list)
    epsilon: float = DEFAULT_EPSILON
    max_iter: int = DEFAULT_MAX_ITER
    converged: bool = False
    stop_reason: str = ""
    timings: dict = field(default_factory=dict)
    pre_projection_deviation: list = field(default_factory=list)

    def record(self, name, value):
        self.energy_trace.append(float(value))
        self.stage_names.append(name)


def _chord_faces(mesh):
    """Faces whose three corners all lie on the boundary."""
    return ~mesh.interior_mask[mesh.faces].any(axis=1)


def _orphans(n_vertices, faces):
    used = np.zeros(n_vertices, dtype=bool)
    used[faces.reshape(-1)] = True
    return np.flatnonzero(~used)


def _place_on_arc(loop, before, after, orphans):
    """Put boundary vertices that no solved face touches back on the circle.

    Each one keeps its fractional angular position between the nearest
    solved boundary vertices on either side.
    """
    if not len(orphans):
        return after
    after = after.copy()
    solved = np.ones(len(loop), dtype=bool)
    solved[np.isin(loop, orphans)] = False
    pos = np.flatnonzero(solved)
    for p in np.flatnonzero(~solved):
        prev = loop[pos[np.searchsorted(pos, p) - 1]]
        nxt = loop[pos[np.searchsorted(pos, p) % len(pos)]]
        v = loop[p]
        span0 = np.angle(before[nxt] / before[prev]) % (2 * np.pi)
        frac = (np.angle(before[v] / before[prev]) % (2 * np.pi)) / span0 if span0 > 0 else 0.5
        span1 = np.angle(after[nxt] / after[prev]) % (2 * np.pi)
        after[v] = project_to_circle(after[prev] * np.exp(1j * frac * span1))
    return after


# -- north pole ------------------------------------------------------------


def _pole_candidates(mesh):
    """Faces with exactly one boundary edge and an interior apex.

    Only these have a Cayley image that is a triangle enclosing the rest of
    the mesh once their boundary arc holds the pole.
    """
    faces = mesh.faces
    interior = mesh.interior_mask
    eligible = np.flatnonzero(interior[faces].sum(axis=1) == 1)
    bnd_edges = _boundary_edge_set(mesh)
    good = []
    for t in eligible:
        k = int(np.flatnonzero(interior[faces[t]])[0])
        if (faces[t, (k + 1) % 3], faces[t, (k + 2) % 3]) in bnd_edges:
            good.append(t)
    if not good:
        raise FaceSelectionError("no face has exactly one boundary edge and an interior apex")
    return np.array(good, dtype=np.int64)


def local_distortion(mesh, abs_mu, candidates, rings=2):
    """Mean of ``abs_mu`` over the ``rings``-ring face neighbourhood of each candidate."""
    nf = mesh.n_faces
    inc = sparse.csr_matrix(
        (np.ones(3 * nf), (mesh.faces.reshape(-1), np.repeat(np.arange(nf), 3))), shape=(mesh.n_vertices, nf)
    )
    sel = sparse.csr_matrix((np.ones(len(candidates)), (np.arange(len(candidates)), candidates)), shape=(len(candidates), nf))
    for _ in range(rings):
        sel = ((sel @ inc.T) @ inc).astype(bool).astype(float)
    return (sel @ abs_mu) / np.asarray(sel.sum(axis=1)).reshape(-1)


def _north_pole_face(mesh, f, pole=POLE_DISTORTION):
    """Face whose boundary arc receives the pole of the Cayley transform.

    ``"nearest"`` takes the candidate face nearest ``z = 1``. ``"distortion"``
    takes the candidate whose surroundings are closest to conformal under
    ``f``, since the big triangle and its neighbourhood are held in place by
    the half-plane solve; ties go to the face nearest ``z = 1``.
    """
    good = _pole_candidates(mesh)
    if pole == POLE_NEAREST:
        t = select_face_near(f, mesh, 1.0)
        if t in set(good.tolist()):
            return t
        return select_face_near(f, mesh, 1.0, candidates=good)
    if pole != POLE_DISTORTION:
        raise ValueError(f"unknown pole rule {pole!r}")
    abs_mu = np.abs(inverse_beltrami(f, mesh.faces, mesh.vertices, strict=False))
    score = local_distortion(mesh, abs_mu, good)
    best = good[score <= score.min() * (1 + 1e-12)]
    return select_face_near(f, mesh, 1.0, candidates=best)


def _boundary_edge_set(mesh):
    loop = mesh.boundary
    return set(zip(loop.tolist(), np.roll(loop, -1).tolist()))


def north_pole_step(mesh, f, method=DIRECT, rel_tol=1e-10, pole=POLE_DISTORTION, return_details=False):
    """Correct interior distortion on the upper half plane.

    The disk is rotated so ``z = 1`` falls in the middle of the boundary arc
    of the face chosen by :func:`_north_pole_face`; that face's Cayley image
    is the big triangle, pinned in place, while every other boundary vertex
    may slide along the real axis. The rotation is undone at the end.

    The Beltrami field on the half plane is ``mu_{f^-1}`` carried through the
    conformal ``W^{-1}`` by the chain rule, so a conformal ``f`` gives exactly
    zero there. Faces with three boundary corners collapse onto the real
    axis under ``W``; they sit out of the solve and their lone corners are
    put back on the arc afterwards.
    """
    f = as_complex(f)
    faces = mesh.faces
    t = _north_pole_face(mesh, f, pole)
    tri = faces[t]
    k = int(np.flatnonzero(mesh.interior_mask[tri])[0])
    a, b, c = tri[(k + 1) % 3], tri[(k + 2) % 3], tri[k]
    ta, tb = np.angle(f[a]), np.angle(f[b])
    gap = (tb - ta) % (2 * np.pi)
    rot = np.exp(1j * (ta + gap / 2))
    fr = f / rot

    w = cayley(fr)
    loop = mesh.boundary
    w[loop] = w[loop].real
    keep = ~_chord_faces(mesh)
    keep[t] = False
    sub = faces[keep]
    orphans = _orphans(len(w), sub)

    # mu of (W o f)^{-1} by the chain rule through the conformal W^{-1}
    zf = fr[sub]
    factor = np.mean(-np.conj(1 - zf) ** 2 / (1 - zf) ** 2, axis=1)
    mu = factor * inverse_beltrami(fr, sub, mesh.vertices, strict=False)
    pins = np.concatenate([[a, b, c], orphans])
    bc = BoundaryCondition(
        point_index=pins,
        point_value=w[pins],
        imag_index=loop,
        imag_value=np.zeros(len(loop)),
    )
    h = lbs_solve(w, sub, mu, bc, method=method, rel_tol=rel_tol)
    h[loop] = h[loop].real
    g = inverse_cayley(h) * rot
    # the boundary already lies on the circle up to rounding
    g[loop] = project_to_circle(g[loop])
    g = _place_on_arc(loop, f, g, orphans)
    if return_details:
        return g, {"face": int(t), "rotation": rot, "cayley": w, "h": h, "mu": mu}
    return g


# -- south pole ------------------------------------------------------------


@dataclass
class ReflectedDomain:
    vertices: np.ndarray  # complex, original then reflected interior copies
    faces: np.ndarray
    reflected_of: np.ndarray  # extended index of the reflected copy, -1 on the boundary
    original_of: np.ndarray  # for each extended vertex, the original vertex
    outer: np.ndarray  # the three pinned outer vertices
    inner_face: int
    n_original: int
    n_original_faces: int


def _recenter(mesh, z):
    """Move a vertex sitting on the origin off it with a disk automorphism."""
    hit = np.flatnonzero(np.abs(z) < ORIGIN_TOL)
    if not len(hit):
        return z
    v = hit[0]
    inc = np.flatnonzero((mesh.faces == v).any(axis=1))
    cen = z[mesh.faces[inc[0]]].mean()
    c = RECENTER_STEP * (cen - z[v]) / abs(cen - z[v])
    out = (z - c) / (1 - np.conj(c) * z)
    if np.any(np.abs(out) < ORIGIN_TOL):
        raise OriginOnVertex(f"vertex {v} stays on the origin after recentring")
    log.debug("recentred map: vertex %d was on the origin", v)
    return out


def reflected_mu(zf, mu):
    """Coefficient on the mirror image of faces with corners ``zf`` carrying ``mu``."""
    factor = np.mean(zf**2 / np.conj(zf) ** 2, axis=1)
    return factor * np.conj(mu)


def reflect_extend(mesh, z, mu_inv=None):
    """Extend the disk mesh by reflecting interior vertices to ``1 / conj(z)``.

    Returns ``(domain, z_ext, mu_ext)``. Boundary vertices are shared. The
    reflected copy of the face holding the origin is dropped; its three
    vertices form the outer triangle. Reflected faces carry
    ``mean(z_k^2 / conj(z_k)^2) * conj(mu(T))``, the chain rule for the
    reflected map evaluated at the three corners and averaged.

    A face with all three corners on the circle would coincide with its own
    reflection, so both copies are left out of the extended mesh.
    """
    z = as_complex(z)
    faces = mesh.faces
    nv = mesh.n_vertices
    if mu_inv is None:
        mu_inv = inverse_beltrami(z, faces, mesh.vertices, strict=False)
    if np.any(np.abs(z) < ORIGIN_TOL):
        raise OriginOnVertex("a vertex lies on the origin")
    interior = mesh.interior_mask
    all_inner = np.flatnonzero(interior[faces].all(axis=1))
    if not len(all_inner):
        raise FaceSelectionError("no face has three interior vertices to anchor the reflection")
    t0 = select_face_near(z, mesh, 0.0)
    if not interior[faces[t0]].all():
        t0 = select_face_near(z, mesh, 0.0, candidates=all_inner)

    int_idx = np.flatnonzero(interior)
    reflected_of = np.full(nv, -1, dtype=np.int64)
    reflected_of[int_idx] = nv + np.arange(len(int_idx))
    z_ext = np.concatenate([z, reflect(z[int_idx])])
    original_of = np.concatenate([np.arange(nv), int_idx])

    chord = _chord_faces(mesh)
    keep = ~chord
    keep[t0] = False
    rf = faces[keep]
    mapped = np.where(reflected_of[rf] >= 0, reflected_of[rf], rf)
    # reflection reverses orientation
    mapped = mapped[:, [0, 2, 1]]
    ext_faces = np.vstack([faces[~chord], mapped])

    mu_ext = np.concatenate([mu_inv[~chord], reflected_mu(z[rf], mu_inv[keep])])

    domain = ReflectedDomain(
        vertices=z_ext,
        faces=ext_faces,
        reflected_of=reflected_of,
        original_of=original_of,
        outer=reflected_of[faces[t0]],
        inner_face=int(t0),
        n_original=nv,
        n_original_faces=len(faces),
    )
    return domain, z_ext, mu_ext


def fit_circle(points):
    """Least-squares circle ``|z - c| = r`` through complex ``points``; returns ``(c, r)``."""
    a = np.column_stack([2 * points.real, 2 * points.imag, np.ones(len(points))])
    x = np.linalg.lstsq(a, np.abs(points) ** 2, rcond=None)[0]
    c = complex(x[0], x[1])
    return c, float(np.sqrt(x[2] + abs(c) ** 2))


def _barycentric(zf, p):
    a, b, c = zf
    den = ((b - a).conjugate() * (c - a)).imag
    l1 = ((p - a).conjugate() * (c - a)).imag / den
    l2 = ((b - a).conjugate() * (p - a)).imag / den
    return np.array([1 - l1 - l2, l1, l2])


def renormalize(q, loop, anchor):
    """Conformal clean-up of an unprojected south pole solution.

    Pinning the outer triangle to itself is only consistent with a map that
    is symmetric under reflection up to a Moebius transformation of the
    sphere, which carries the unit circle to some other circle. The circle
    through the boundary images is fitted and mapped back onto the unit
    circle by a similarity, then a disk automorphism returns ``anchor``
    (the image of the old origin) to 0.
    """
    c, r = fit_circle(q[loop])
    q = (q - c) / r
    a = (anchor - c) / r
    if abs(a) < 1:
        q = (q - a) / (1 - np.conj(a) * q)
    return q


def south_pole_step(mesh, z, method=DIRECT, rel_tol=1e-10, normalize=True, return_details=False):
    """One reflection correction followed by boundary reprojection.

    Returns ``(phi, deviation)`` where ``deviation`` is the boundary's
    ``sum |1 - |z|^2|`` just before projection. With ``normalize`` the
    solution first goes through :func:`renormalize`.
    """
    z = _recenter(mesh, as_complex(z))
    domain, z_ext, mu_ext = reflect_extend(mesh, z)
    orphans = _orphans(len(z_ext), domain.faces)
    pins = np.concatenate([domain.outer, orphans])
    values = z_ext[pins]
    bc = BoundaryCondition.pin_points(pins, values)
    q = lbs_solve(z_ext, domain.faces, mu_ext, bc, method=method, rel_tol=rel_tol)
    out = q[: mesh.n_vertices].copy()
    loop = mesh.boundary
    solved = loop[~np.isin(loop, orphans)]
    raw = float(np.sum(np.abs(1 - np.abs(out[solved]) ** 2)))
    if normalize:
        tri = mesh.faces[domain.inner_face]
        anchor = _barycentric(z[tri], 0.0) @ out[tri]
        out = renormalize(out, solved, anchor)
    deviation = float(np.sum(np.abs(1 - np.abs(out[solved]) ** 2)))
    out[loop] = project_to_circle(out[loop])
    out = _place_on_arc(loop, z, out, orphans)
    if return_details:
        return out, {"domain": domain, "mu": mu_ext, "pre_projection_deviation": deviation, "raw_deviation": raw}
    return out, deviation


def south_pole_iteration(mesh, g, state, method=DIRECT, rel_tol=1e-10, normalize=True):
    """Run one south pole step and update ``state``; returns ``(phi, state)``.

    The state's ``converged`` flag is raised when the decrease of mean |mu|
    falls below ``epsilon``, when the energy goes up, or at ``max_iter``.
    When the energy goes up the previous map is kept.
    """
    if state.previous_mean is None:
        state.previous_mean = mean_abs_mu(mesh, g)
    start = time.perf_counter()
    phi, deviation = south_pole_step(mesh, g, method, rel_tol, normalize)
    current = mean_abs_mu(mesh, phi)
    state.iteration += 1
    state.timings[f"south_pole_{state.iteration}"] = time.perf_counter() - start
    state.pre_projection_deviation.append(deviation)
    state.record(f"south_pole_{state.iteration}", current)
    decrease = state.previous_mean - current
    log.info("south pole %d: mean|mu| %.6g (decrease %.3g)", state.iteration, current, decrease)
    if decrease < -ENERGY_TOL:
        warnings.warn(
            f"mean |mu| rose from {state.previous_mean:.6g} to {current:.6g}; keeping the previous map",
            NonDecreasingEnergy,
            stacklevel=2,
        )
        state.converged = True
        state.stop_reason = "energy increased"
        state.phi = g
        return g, state
    state.previous_mean = current
    state.phi = phi
    if decrease < state.epsilon:
        state.converged = True
        state.stop_reason = "decrease below epsilon"
    elif state.iteration >= state.max_iter:
        state.converged = True
        state.stop_reason = "max_iter reached"
    return phi, state


def run_pipeline(
    mesh,
    epsilon=DEFAULT_EPSILON,
    max_iter=DEFAULT_MAX_ITER,
    method=DIRECT,
    rel_tol=1e-10,
    check=True,
    pole=POLE_DISTORTION,
    normalize=True,
):
    """Full disk conformal parameterisation of ``mesh``.

    Returns ``(phi, report)`` where ``phi`` holds one complex coordinate per
    vertex and ``report`` is a :class:`~fastdisk.metrics.QualityReport`.
    ``check`` raises :class:`~fastdisk.exceptions.BijectivityFailure` when the
    final map has flipped faces; otherwise they are only listed in the report.
    ``pole`` picks the north pole face rule and ``normalize`` toggles the
    conformal clean-up inside each south pole step.
    """
    from .exceptions import BijectivityFailure
    from .metrics import compute_report

    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    timings = {}

    t = time.perf_counter()
    f = harmonic_disk_map(mesh, method=method, rel_tol=rel_tol)
    timings["harmonic"] = time.perf_counter() - t
    state = PipelineState(phi=f, epsilon=epsilon, max_iter=max_iter)
    state.record("harmonic", mean_abs_mu(mesh, f))

    t = time.perf_counter()
    g = north_pole_step(mesh, f, method, rel_tol, pole)
    timings["north_pole"] = time.perf_counter() - t
    north = mean_abs_mu(mesh, g)
    state.record("north_pole", north)
    state.phi = g
    state.previous_mean = north

    phi = g
    while not state.converged:
        phi, state = south_pole_iteration(mesh, phi, state, method, rel_tol, normalize)
    timings.update(state.timings)
    timings["total"] = sum(timings.values())

    report = compute_report(
        mesh,
        phi,
        trace=state.energy_trace,
        timings=timings,
        iterations=state.iteration,
        stop_reason=state.stop_reason,
        stage_names=state.stage_names,
        pre_projection_deviation=state.pre_projection_deviation,
    )
    if check and report.flipped_faces:
        raise BijectivityFailure(report.flipped_faces, report)
    return phi, report
