import numpy as np
import pytest

from fastdisk import fixtures
from fastdisk.beltrami import (
    beltrami_coefficient,
    compose_beltrami,
    face_beltrami_lifted,
    face_beltrami_planar,
    face_jets,
    flatten_faces,
    gradient_operators,
    inverse_beltrami,
    inverse_beltrami_analytic,
    jacobian,
    load_field_csv,
    maximal_dilation,
    save_field_csv,
    signed_area,
)
from fastdisk.exceptions import DivisionByZero, FoldedFace, Unbounded

from conftest import planar


def rotation(axis, angle):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * k @ k


def test_identity_is_conformal(flat200):
    z = planar(flat200)
    assert np.max(np.abs(face_beltrami_planar(z, flat200.faces, z))) <= 1e-12


def test_horizontal_stretch(flat200):
    z = planar(flat200)
    mu = face_beltrami_planar(z, flat200.faces, 2 * z.real + 1j * z.imag)
    np.testing.assert_allclose(mu, 1 / 3, rtol=0, atol=1e-12)


def test_affine_with_conjugate(flat200):
    z = planar(flat200)
    mu = face_beltrami_planar(z, flat200.faces, z + 0.5 * np.conj(z))
    np.testing.assert_allclose(mu, 0.5, rtol=0, atol=1e-12)


def test_lifted_rotated_plane_matches_planar(flat200):
    z = planar(flat200)
    w = 1.3 * z + 0.2 * np.conj(z) + 0.1 * z**2
    target = np.column_stack([w.real, w.imag, np.zeros(len(w))]) @ rotation([1, 2, 3], 0.7).T
    flat = face_beltrami_planar(z, flat200.faces, w)
    lifted = face_beltrami_lifted(z, flat200.faces, target)
    assert np.max(np.abs(lifted - flat)) <= 1e-12


def test_lifted_independent_of_flattening(hemi5k):
    src = np.exp(1j * np.linspace(0, 1, hemi5k.n_vertices)) * np.linspace(0.1, 1, hemi5k.n_vertices)
    faces = hemi5k.faces
    a = face_beltrami_lifted(src, faces, hemi5k.vertices)
    # cycling corners changes which edge is laid on the real axis
    rolled = faces[:, [1, 2, 0]]
    b = face_beltrami_lifted(src, rolled, hemi5k.vertices)
    moved = hemi5k.vertices @ rotation([0.3, -1, 0.5], 2.1).T + [4.0, -1.0, 7.0]
    c = face_beltrami_lifted(src, faces, moved)
    assert np.max(np.abs(a - b)) <= 1e-12 and np.max(np.abs(a - c)) <= 1e-12


def test_square_onto_doubled_rectangle_at_height_five():
    sq = fixtures.unit_square()
    target = np.column_stack([2 * sq.vertices[:, 0], sq.vertices[:, 1], np.full(4, 5.0)])
    mu = face_beltrami_lifted(planar(sq), sq.faces, target)
    np.testing.assert_allclose(mu, 1 / 3, rtol=0, atol=1e-12)


def test_flatten_preserves_lengths(hemi5k):
    zf = flatten_faces(hemi5k.vertices, hemi5k.faces)
    v = hemi5k.vertices[hemi5k.faces]
    for i, j in [(0, 1), (1, 2), (2, 0)]:
        np.testing.assert_allclose(np.abs(zf[:, i] - zf[:, j]), np.linalg.norm(v[:, i] - v[:, j], axis=1), rtol=1e-12)
    assert np.all(signed_area(zf) > 0)


def test_dispatch_matches_specialised(hemi5k):
    z = np.linspace(0, 1, hemi5k.n_vertices) * np.exp(1j * np.arange(hemi5k.n_vertices))
    assert np.array_equal(
        beltrami_coefficient(z, hemi5k.faces, hemi5k.vertices), face_beltrami_lifted(z, hemi5k.faces, hemi5k.vertices)
    )


def test_degenerate_image_raises(flat200):
    z = planar(flat200)
    w = z.copy()
    f0 = flat200.faces[0]
    w[f0[1]] = w[f0[0]]
    w[f0[2]] = w[f0[0]]
    with pytest.raises(DivisionByZero) as info:
        face_beltrami_planar(z, flat200.faces, w)
    assert info.value.faces[0] == 0


def test_inverse_of_identity(flat200):
    z = planar(flat200)
    assert np.max(np.abs(inverse_beltrami(z, flat200.faces, z))) <= 1e-12


def test_inverse_of_stretch(flat200):
    z = planar(flat200)
    w = 2 * z.real + 1j * z.imag
    fz, _ = face_jets(z, flat200.faces, w)
    np.testing.assert_allclose(fz, 1.5, rtol=0, atol=1e-12)
    np.testing.assert_allclose(inverse_beltrami(w, flat200.faces, z), -1 / 3, rtol=0, atol=1e-12)


def test_inverse_swap_matches_analytic_on_eight_faces():
    mesh = fixtures.fan(8)
    z = planar(mesh)
    g = fixtures.random_pl_map(mesh, seed=11)
    mu_f = face_beltrami_planar(z, mesh.faces, g)
    fz, _ = face_jets(z, mesh.faces, g)
    swap = inverse_beltrami(g, mesh.faces, z)
    assert mesh.n_faces == 8
    assert np.max(np.abs(swap - inverse_beltrami_analytic(mu_f, fz))) <= 1e-12


def test_gradient_of_linear_function(flat200):
    zf = planar(flat200)[flat200.faces]
    dx, dy, _ = gradient_operators(zf)
    vals = 3 * zf.real - 2 * zf.imag
    np.testing.assert_allclose(np.sum(dx * vals, axis=1), 3, rtol=0, atol=1e-12)
    np.testing.assert_allclose(np.sum(dy * vals, axis=1), -2, rtol=0, atol=1e-12)


def test_inverse_folded_face(flat200):
    z = planar(flat200)
    with pytest.raises(FoldedFace):
        inverse_beltrami(z + 2 * np.conj(z), flat200.faces, z)
    mu = inverse_beltrami(z + 2 * np.conj(z), flat200.faces, z, strict=False)
    assert np.all(np.abs(mu) > 1)


def test_compose_identity_first():
    mu_g = np.array([0.1, 0.2j, -0.3 + 0.1j])
    out = compose_beltrami(np.zeros(3), np.ones(3), mu_g)
    assert np.max(np.abs(out - mu_g)) <= 1e-12


def test_compose_conformal_second():
    mu_f = np.array([0.1, 0.2j, -0.3 + 0.1j])
    fz = np.array([1 + 1j, 2.0, -0.5j])
    assert np.max(np.abs(compose_beltrami(mu_f, fz, np.zeros(3)) - mu_f)) <= 1e-12


def test_compose_with_inverse_cancels():
    mesh = fixtures.flat_disk(60, jitter=0.3, seed=2)
    z = planar(mesh)
    f = fixtures.random_pl_map(mesh, seed=5)
    mu_f = face_beltrami_planar(z, mesh.faces, f)
    fz, _ = face_jets(z, mesh.faces, f)
    out = compose_beltrami(mu_f, fz, inverse_beltrami(f, mesh.faces, z))
    assert np.max(np.abs(out)) <= 1e-12


def test_compose_singular_pair():
    with pytest.raises(DivisionByZero):
        compose_beltrami(np.array([0.5]), np.array([1.0]), np.array([-2.0]))


def test_maximal_dilation_zero():
    assert maximal_dilation(np.zeros(5)) == 1.0


def test_maximal_dilation_third():
    assert maximal_dilation(np.full(4, 1 / 3) * np.exp(1j * np.arange(4))) == pytest.approx(2.0, abs=1e-12)


def test_maximal_dilation_half():
    assert maximal_dilation(np.array([0.1, 0.5j, 0.2])) == pytest.approx(3.0, abs=1e-12)


def test_maximal_dilation_unbounded():
    with pytest.raises(Unbounded):
        maximal_dilation(np.array([0.2, 1.0]))


def test_orientation_matches_jacobian(flat200):
    z = planar(flat200)
    w = z + 0.8 * np.conj(z) ** 2
    fz, _ = face_jets(z, flat200.faces, w)
    mu = face_beltrami_planar(z, flat200.faces, w)
    area = signed_area(w[flat200.faces])
    assert np.array_equal(np.sign(area), np.sign(jacobian(fz, mu)))
    assert np.any(area < 0) and np.any(area > 0)


def test_field_csv_round_trip(tmp_path, flat200):
    z = planar(flat200)
    mu = face_beltrami_planar(z, flat200.faces, z + 0.3 * np.conj(z) ** 2)
    path = tmp_path / "mu.csv"
    save_field_csv(mu, path)
    assert np.array_equal(load_field_csv(path), mu)
