import numpy as np
import pytest

from mpmrb.bodies import (GeomAttachment, RigidBody, Trajectory,
                          advance_kinematic_body, compose_geoms,
                          integrate_free_body)
from mpmrb.geometry import Box, HalfSpace, Sphere
from mpmrb.rotations import (quat_exp_increment, quat_from_axis_angle,
                             quat_identity, quat_multiply, quat_normalize,
                             quat_slerp, quat_to_matrix)


def test_quat_identity_matrix():
    assert np.array_equal(quat_to_matrix(quat_identity()), np.eye(3))


def test_quat_axis_angle_roundtrip(rng):
    axis = rng.normal(size=3)
    angle = 1.3
    r = quat_to_matrix(quat_from_axis_angle(axis, angle))
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-14)
    assert np.linalg.det(r) == pytest.approx(1.0)
    assert np.trace(r) == pytest.approx(1.0 + 2.0 * np.cos(angle))
    n = axis / np.linalg.norm(axis)
    assert np.allclose(r @ n, n, atol=1e-14)


def test_quat_multiply_composes(rng):
    q1 = quat_normalize(rng.normal(size=4))
    q2 = quat_normalize(rng.normal(size=4))
    r = quat_to_matrix(quat_multiply(q1, q2))
    assert np.allclose(r, quat_to_matrix(q1) @ quat_to_matrix(q2), atol=1e-13)


def test_quat_exp_increment_small_angle(rng):
    q = quat_normalize(rng.normal(size=4))
    omega = np.array([0.0, 0.0, 2.0])
    dt = 1e-3
    q_new = quat_exp_increment(q, omega, dt)
    want = quat_multiply(quat_from_axis_angle(omega, np.linalg.norm(omega) * dt), q)
    assert np.allclose(q_new, want, atol=1e-14)


def test_slerp_endpoints_and_midpoint():
    q0 = quat_identity()
    q1 = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    assert np.allclose(quat_slerp(q0, q1, 0.0), q0)
    assert np.allclose(quat_slerp(q0, q1, 1.0), q1)
    mid = quat_slerp(q0, q1, 0.5)
    want = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 4)
    assert np.allclose(mid, want, atol=1e-12)


def test_trajectory_sample_interpolates():
    traj = Trajectory(
        times=np.array([0.0, 1.0, 3.0]),
        positions=np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 2.0, 0]]),
        quats=np.stack([quat_identity()] * 3),
    )
    pos, quat, v, omega = traj.sample(0.5)
    assert np.allclose(pos, [0.5, 0, 0])
    assert np.allclose(v, [1.0, 0, 0])
    pos, _, v, _ = traj.sample(2.0)
    assert np.allclose(pos, [1.0, 1.0, 0])
    assert np.allclose(v, [0.0, 1.0, 0])
    # held flat outside the keyframe range with zero velocity
    pos, _, v, _ = traj.sample(-1.0)
    assert np.allclose(pos, [0, 0, 0]) and np.allclose(v, 0)
    pos, _, v, _ = traj.sample(9.0)
    assert np.allclose(pos, [1.0, 2.0, 0]) and np.allclose(v, 0)


def test_trajectory_angular_velocity():
    q0 = quat_identity()
    q1 = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 0.5)
    traj = Trajectory(times=np.array([0.0, 2.0]),
                      positions=np.zeros((2, 3)),
                      quats=np.stack([q0, q1]))
    _, _, _, omega = traj.sample(1.0)
    assert np.allclose(omega, [0, 0, 0.25], atol=1e-12)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(times=np.array([0.0, 0.0]), positions=np.zeros((2, 3)),
                   quats=np.stack([quat_identity()] * 2))
    with pytest.raises(ValueError):
        Trajectory(times=np.array([0.0]), positions=np.zeros((2, 3)),
                   quats=np.stack([quat_identity()] * 1))


def test_free_body_requires_valid_mass():
    with pytest.raises(ValueError):
        RigidBody(name="b", kinematic=False, mass=0.0,
                  geoms=[GeomAttachment(shape=Sphere(radius=0.1))])
    with pytest.raises(ValueError):
        RigidBody(name="b", kinematic=False, mass=1.0,
                  inertia_body=np.diag([1.0, 1.0, 0.0]),
                  geoms=[GeomAttachment(shape=Sphere(radius=0.1))])
    with pytest.raises(ValueError):
        RigidBody(name="b", kinematic=False, mass=1.0,
                  geoms=[GeomAttachment(shape=HalfSpace(normal=(0, 0, 1),
                                                        offset=0.0))])


def test_integrate_free_body_ballistic():
    body = RigidBody(name="b", kinematic=False, mass=2.0,
                     inertia_body=np.eye(3) * 0.01,
                     geoms=[GeomAttachment(shape=Sphere(radius=0.1))],
                     v=np.array([1.0, 0.0, 0.0]))
    g = np.array([0.0, 0.0, -10.0])
    dt = 0.1
    integrate_free_body(body, np.zeros(3), np.zeros(3), g, dt)
    assert np.allclose(body.v, [1.0, 0.0, -1.0])
    # symplectic: position moves with the updated velocity
    assert np.allclose(body.position, [0.1, 0.0, -0.1])


def test_integrate_free_body_impulse():
    body = RigidBody(name="b", kinematic=False, mass=4.0,
                     inertia_body=np.eye(3) * 0.02,
                     geoms=[GeomAttachment(shape=Sphere(radius=0.1))])
    integrate_free_body(body, np.array([2.0, 0.0, 0.0]),
                        np.array([0.0, 0.0, 0.04]), np.zeros(3), 0.1)
    assert np.allclose(body.v, [0.5, 0.0, 0.0])
    assert np.allclose(body.omega, [0.0, 0.0, 2.0], atol=1e-12)


def test_torque_free_spin_conserves_angular_momentum():
    # asymmetric inertia, off-axis spin: ||I w|| must hold to roundoff
    body = RigidBody(name="b", kinematic=False, mass=1.0,
                     inertia_body=np.diag([0.01, 0.02, 0.04]),
                     geoms=[GeomAttachment(shape=Box(half_extents=(0.1, 0.1, 0.1)))],
                     omega=np.array([3.0, 2.0, 1.0]))
    l0 = body.angular_momentum()
    for _ in range(1000):
        integrate_free_body(body, np.zeros(3), np.zeros(3), np.zeros(3), 1e-3)
    l1 = body.angular_momentum()
    assert abs(np.linalg.norm(l1) - np.linalg.norm(l0)) < 1e-9 * np.linalg.norm(l0)


def test_advance_kinematic_body_snaps():
    traj = Trajectory(times=np.array([0.0, 1.0]),
                      positions=np.array([[0.0, 0, 0], [0.5, 0, 0]]),
                      quats=np.stack([quat_identity()] * 2))
    body = RigidBody(name="k", kinematic=True, trajectory=traj,
                     geoms=[GeomAttachment(shape=Sphere(radius=0.1))])
    advance_kinematic_body(body, 0.5)
    assert np.allclose(body.position, [0.25, 0, 0])
    assert np.allclose(body.v, [0.5, 0, 0])
    static = RigidBody(name="s", kinematic=True,
                       geoms=[GeomAttachment(shape=Sphere(radius=0.1))],
                       v=np.array([9.0, 9.0, 9.0]))
    advance_kinematic_body(static, 2.0)
    assert np.allclose(static.v, 0.0)


def test_compose_geoms_single_sphere():
    rho = 1200.0
    m, com, inertia = compose_geoms([(Sphere(radius=0.1), np.zeros(3),
                                      quat_identity(), rho)])
    vol = 4.0 / 3.0 * np.pi * 1e-3
    assert m == pytest.approx(rho * vol)
    assert np.allclose(com, 0.0)
    assert np.allclose(inertia, np.eye(3) * (2.0 / 5.0 * m * 0.01))


def test_compose_geoms_parallel_axis():
    # two identical spheres at +-d on x: Ixx unchanged, Iyy/Izz gain 2 m d^2
    rho = 1000.0
    d = 0.2
    shape = Sphere(radius=0.05)
    m, com, inertia = compose_geoms([
        (shape, np.array([d, 0.0, 0.0]), quat_identity(), rho),
        (shape, np.array([-d, 0.0, 0.0]), quat_identity(), rho),
    ])
    m1 = rho * shape.volume
    i1 = 2.0 / 5.0 * m1 * 0.05**2
    assert np.allclose(com, 0.0, atol=1e-15)
    assert inertia[0, 0] == pytest.approx(2 * i1)
    assert inertia[1, 1] == pytest.approx(2 * i1 + 2 * m1 * d * d)
    assert inertia[2, 2] == pytest.approx(2 * i1 + 2 * m1 * d * d)
