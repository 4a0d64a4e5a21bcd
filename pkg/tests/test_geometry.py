import numpy as np
import pytest

from mpmrb.geometry import (Box, Capsule, HalfSpace, Sphere, contact_frames,
                            query_signed_distance, tangent_basis)


def check_sdf_consistency(shape, pts, tol=1e-9):
    """witness lies on the zero level set and phi = signed distance to it."""
    phi, normal, witness = shape.query(pts)
    assert np.abs(np.linalg.norm(normal, axis=1) - 1.0).max() < tol
    phi_w, _, _ = shape.query(witness)
    assert np.abs(phi_w).max() < 1e-7
    # outside points: phi equals the distance to the witness
    out = phi > 1e-6
    d = np.linalg.norm(pts[out] - witness[out], axis=1)
    assert np.abs(d - phi[out]).max() < 1e-7
    # walking along the outward normal increases phi at unit rate
    eps = 1e-6
    phi_step, _, _ = shape.query(pts + eps * normal)
    assert np.abs((phi_step - phi) - eps).max() < 1e-7


def test_halfspace_query():
    hs = HalfSpace(normal=(0.0, 0.0, 1.0), offset=0.0)
    pts = np.array([[0.0, 0.0, 0.5], [1.0, 2.0, -0.25], [0.0, 0.0, 0.0]])
    phi, normal, witness = hs.query(pts)
    assert np.allclose(phi, [0.5, -0.25, 0.0])
    assert np.allclose(normal, [[0, 0, 1]] * 3)
    assert np.allclose(witness[:, 2], 0.0)
    assert np.allclose(witness[:, :2], pts[:, :2])


def test_halfspace_requires_unit_normal():
    with pytest.raises(ValueError):
        HalfSpace(normal=(0.0, 0.0, 2.0), offset=0.0)


def test_sphere_query(rng):
    s = Sphere(radius=0.3)
    pts = rng.normal(0.0, 0.5, size=(200, 3))
    pts = pts[np.linalg.norm(pts, axis=1) > 1e-3]
    phi, normal, witness = s.query(pts)
    r = np.linalg.norm(pts, axis=1)
    assert np.allclose(phi, r - 0.3, atol=1e-12)
    assert np.allclose(normal, pts / r[:, None], atol=1e-12)
    assert np.abs(np.linalg.norm(witness, axis=1) - 0.3).max() < 1e-12
    check_sdf_consistency(s, pts)


def test_box_query_outside_faces():
    b = Box(half_extents=(0.1, 0.2, 0.3))
    phi, normal, witness = b.query(np.array([[0.25, 0.0, 0.0]]))
    assert phi[0] == pytest.approx(0.15)
    assert np.allclose(normal[0], [1, 0, 0])
    assert np.allclose(witness[0], [0.1, 0.0, 0.0])


def test_box_query_outside_corner():
    b = Box(half_extents=(0.1, 0.1, 0.1))
    p = np.array([[0.2, 0.2, 0.2]])
    phi, normal, witness = b.query(p)
    assert phi[0] == pytest.approx(np.sqrt(3) * 0.1)
    assert np.allclose(normal[0], np.ones(3) / np.sqrt(3))
    assert np.allclose(witness[0], [0.1, 0.1, 0.1])


def test_box_query_inside_nearest_face():
    b = Box(half_extents=(0.1, 0.2, 0.3))
    phi, normal, witness = b.query(np.array([[0.05, 0.0, 0.0]]))
    assert phi[0] == pytest.approx(-0.05)
    assert np.allclose(normal[0], [1, 0, 0])
    assert np.allclose(witness[0], [0.1, 0.0, 0.0])
    # tie between faces resolves to the first axis in x, y, z order
    b2 = Box(half_extents=(0.1, 0.1, 0.1))
    _, normal2, _ = b2.query(np.array([[0.0, 0.0, 0.0]]))
    assert np.allclose(normal2[0], [1, 0, 0])


def test_box_sdf_consistency(rng):
    b = Box(half_extents=(0.15, 0.1, 0.25))
    pts = rng.uniform(-0.4, 0.4, size=(300, 3))
    keep = np.abs(b.query(pts)[0]) > 1e-4  # skip points too close to the surface
    check_sdf_consistency(b, pts[keep], tol=1e-9)


def test_capsule_query(rng):
    c = Capsule(radius=0.05, half_length=0.2)
    # on-axis beyond the cap
    phi, normal, _ = c.query(np.array([[0.0, 0.0, 0.35]]))
    assert phi[0] == pytest.approx(0.1)
    assert np.allclose(normal[0], [0, 0, 1])
    # beside the cylinder
    phi, normal, witness = c.query(np.array([[0.2, 0.0, 0.0]]))
    assert phi[0] == pytest.approx(0.15)
    assert np.allclose(normal[0], [1, 0, 0])
    assert np.allclose(witness[0], [0.05, 0.0, 0.0])
    pts = rng.normal(0.0, 0.3, size=(200, 3))
    pts = pts[np.abs(c.query(pts)[0]) > 1e-4]
    check_sdf_consistency(c, pts)


def test_query_signed_distance_validates():
    s = Sphere(radius=0.1)
    with pytest.raises(ValueError):
        query_signed_distance(s, np.zeros((4, 2)))
    with pytest.raises(ValueError):
        query_signed_distance(s, np.full((2, 3), np.inf))


def test_tangent_basis_orthonormal(rng):
    n = rng.normal(size=(500, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    t1, t2 = tangent_basis(n)
    assert np.abs(np.einsum("ij,ij->i", t1, n)).max() < 1e-12
    assert np.abs(np.einsum("ij,ij->i", t2, n)).max() < 1e-12
    assert np.abs(np.einsum("ij,ij->i", t1, t2)).max() < 1e-12
    assert np.abs(np.linalg.norm(t1, axis=1) - 1.0).max() < 1e-12
    assert np.abs(np.cross(t1, t2) - n).max() < 1e-12  # right-handed


def test_contact_frames_rows_and_determinant(rng):
    n = rng.normal(size=(100, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    frames = contact_frames(n)
    assert frames.shape == (100, 3, 3)
    assert np.allclose(frames[:, 2, :], n)
    eye = np.broadcast_to(np.eye(3), frames.shape)
    assert np.abs(np.einsum("cij,ckj->cik", frames, frames) - eye).max() < 1e-12
    dets = np.linalg.det(frames)
    assert np.allclose(dets, 1.0, atol=1e-12)


def test_contact_frames_deterministic_seed():
    # seed axis is the smallest |n| component, ties to the lower index
    n = np.array([[0.0, 0.0, 1.0]])
    frames = contact_frames(n)
    again = contact_frames(n.copy())
    assert np.array_equal(frames, again)


def test_shape_volumes_and_inertia():
    assert Sphere(radius=0.1).volume == pytest.approx(4.0 / 3.0 * np.pi * 1e-3)
    assert Box(half_extents=(0.1, 0.2, 0.3)).volume == pytest.approx(8 * 0.006)
    c = Capsule(radius=0.1, half_length=0.2)
    vol_cyl = np.pi * 0.01 * 0.4
    vol_sph = 4.0 / 3.0 * np.pi * 1e-3
    assert c.volume == pytest.approx(vol_cyl + vol_sph)
    # unit inertia tensors are symmetric positive definite
    for shape in (Sphere(radius=0.1), Box(half_extents=(0.1, 0.2, 0.3)), c):
        inertia = shape.unit_inertia()
        assert np.allclose(inertia, inertia.T)
        assert np.all(np.linalg.eigvalsh(inertia) > 0)


def test_shape_validation():
    with pytest.raises(ValueError):
        Sphere(radius=0.0)
    with pytest.raises(ValueError):
        Box(half_extents=(0.1, -0.1, 0.1))
    with pytest.raises(ValueError):
        Capsule(radius=-0.1, half_length=0.1)
