import numpy as np
import pytest

from mpmrb.contact_model import (ContactParams, contact_energy, contact_gradient,
                                 contact_hessian, contact_impulses, impulse_gain,
                                 normal_impulse, stabilization_velocity)
from oracles import fd_gradient

PARAMS = ContactParams(stiffness=1e5, tau_d=2e-3, eps_v=1e-4)
DT = 1e-3


def random_contacts(rng, n, v_scale=0.5):
    v_c = rng.normal(0.0, v_scale, size=(n, 3))
    phi = rng.uniform(-0.005, 0.005, size=n)
    gamma_lag = rng.uniform(0.0, 2.0, size=n)
    mu = rng.uniform(0.2, 1.1, size=n)
    return v_c, phi, gamma_lag, mu


def test_params_validation():
    with pytest.raises(ValueError):
        ContactParams(stiffness=0.0)
    with pytest.raises(ValueError):
        ContactParams(tau_d=-1e-3)
    with pytest.raises(ValueError):
        ContactParams(eps_v=0.0)


def test_impulse_gain_formula():
    assert impulse_gain(PARAMS, DT) == pytest.approx(DT * (DT + 2e-3) * 1e5)


def test_stabilization_velocity_sign():
    # penetrating contact (phi < 0) wants positive separating velocity
    vhat = stabilization_velocity(np.array([-0.01, 0.01]), PARAMS, DT)
    assert vhat[0] > 0 > vhat[1]
    assert vhat[0] == pytest.approx(0.01 / (DT + 2e-3))


def test_normal_impulse_one_sided():
    phi = np.zeros(3)
    v_n = np.array([-1.0, 0.0, 1.0])  # approaching, resting, separating
    gamma = normal_impulse(v_n, phi, PARAMS, DT)
    k_gain = impulse_gain(PARAMS, DT)
    assert gamma[0] == pytest.approx(k_gain)
    assert gamma[1] == 0.0
    assert gamma[2] == 0.0


def test_energy_nonnegative_and_zero_at_rest(rng):
    v_c, phi, gamma_lag, mu = random_contacts(rng, 200)
    ell = contact_energy(v_c, phi, gamma_lag, mu, PARAMS, DT)
    assert (ell >= 0).all()
    # separating at the target rate with zero tangential slip costs nothing
    v_rest = np.zeros((1, 3))
    v_rest[0, 2] = stabilization_velocity(np.array([-0.002]), PARAMS, DT)[0]
    ell0 = contact_energy(v_rest, np.array([-0.002]), np.array([1.0]),
                          np.array([0.5]), PARAMS, DT)
    assert ell0[0] == 0.0


def test_gradient_matches_fd(rng):
    v_c, phi, gamma_lag, mu = random_contacts(rng, 40)
    # stay away from the two kinks where l_c is only C^1
    vhat = stabilization_velocity(phi, PARAMS, DT)
    v_c[:, 2] = np.where(np.abs(v_c[:, 2] - vhat) < 1e-3,
                         vhat + 2e-3 * np.sign(v_c[:, 2] - vhat + 1e-12), v_c[:, 2])
    g = contact_gradient(v_c, phi, gamma_lag, mu, PARAMS, DT)
    for c in range(v_c.shape[0]):
        def ell(flat, c=c):
            vv = v_c.copy()
            vv[c] = flat
            return contact_energy(vv[c:c + 1], phi[c:c + 1], gamma_lag[c:c + 1],
                                  mu[c:c + 1], PARAMS, DT)[0]
        g_fd = fd_gradient(ell, v_c[c].copy(), 1e-7)
        scale = max(1.0, np.abs(g[c]).max())
        assert np.abs(g[c] - g_fd).max() < 1e-6 * scale


def test_gradient_stick_slide_branches():
    gamma_lag = np.array([2.0, 2.0])
    mu = np.array([0.5, 0.5])
    phi = np.zeros(2)
    # stick: |v_t| well below eps_v -> linear in v_t with slope mu gamma / eps
    v_stick = np.array([[2e-5, 0.0, 1.0], [0.05, 0.0, 1.0]])
    g = contact_gradient(v_stick, phi, gamma_lag, mu, PARAMS, DT)
    assert g[0, 0] == pytest.approx(0.5 * 2.0 * 2e-5 / PARAMS.eps_v)
    # slide: magnitude saturates at mu gamma_lag
    assert np.linalg.norm(g[1, :2]) == pytest.approx(0.5 * 2.0)


def test_hessian_matches_fd_away_from_kinks(rng):
    v_c, phi, gamma_lag, mu = random_contacts(rng, 25)
    vhat = stabilization_velocity(phi, PARAMS, DT)
    v_c[:, 2] = vhat - 0.1  # firmly active normal
    s = np.linalg.norm(v_c[:, :2], axis=1)
    v_c[s < 5e-3, :2] *= 10.0  # firmly sliding
    big_g = contact_hessian(v_c, phi, gamma_lag, mu, PARAMS, DT)
    for c in range(v_c.shape[0]):
        def grad(flat, c=c):
            vv = v_c.copy()
            vv[c] = flat
            return contact_gradient(vv[c:c + 1], phi[c:c + 1], gamma_lag[c:c + 1],
                                    mu[c:c + 1], PARAMS, DT)[0]
        from oracles import fd_jacobian
        h_fd = fd_jacobian(grad, v_c[c].copy(), 1e-6)
        scale = max(1.0, np.abs(big_g[c]).max())
        assert np.abs(big_g[c] - h_fd).max() < 1e-5 * scale


def test_hessian_psd(rng):
    v_c, phi, gamma_lag, mu = random_contacts(rng, 300)
    big_g = contact_hessian(v_c, phi, gamma_lag, mu, PARAMS, DT)
    eig = np.linalg.eigvalsh(big_g)
    assert eig.min() >= -1e-10


def test_hessian_active_at_boundary():
    # at v_n = vhat exactly, the normal curvature takes the active value K
    phi = np.array([0.0])
    v_c = np.array([[0.0, 0.0, 0.0]])
    big_g = contact_hessian(v_c, phi, np.array([0.0]), np.array([0.5]), PARAMS, DT)
    assert big_g[0, 2, 2] == pytest.approx(impulse_gain(PARAMS, DT))


def test_hessian_slide_projects_out_slip_direction():
    gamma_lag = np.array([3.0])
    mu = np.array([0.4])
    v_c = np.array([[0.2, 0.0, 1.0]])
    big_g = contact_hessian(v_c, np.zeros(1), gamma_lag, mu, PARAMS, DT)
    # no curvature along the slip direction, mu gamma / s across it
    assert big_g[0, 0, 0] == pytest.approx(0.0, abs=1e-15)
    assert big_g[0, 1, 1] == pytest.approx(0.4 * 3.0 / 0.2)
    assert big_g[0, 2, 2] == 0.0  # separating normal is inactive


def test_impulses_respect_friction_cone(rng):
    v_c, phi, gamma_lag, mu = random_contacts(rng, 500)
    gamma = contact_impulses(v_c, phi, gamma_lag, mu, PARAMS, DT)
    # normal impulse non-negative
    assert (gamma[:, 2] >= 0).all()
    # tangential magnitude inside the lagged cone
    t_mag = np.linalg.norm(gamma[:, :2], axis=1)
    assert (t_mag <= mu * gamma_lag + 1e-12).all()
    # friction opposes slip
    dot = np.einsum("ci,ci->c", gamma[:, :2], v_c[:, :2])
    assert (dot <= 1e-15).all()


def test_margin_default_none():
    p = ContactParams()
    assert p.margin is None
