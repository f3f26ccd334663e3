import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artsplat.lie import (
    AngleAtPiError,
    RigidTransform,
    Twist,
    exp_se3,
    hat,
    log_se3,
    point_jacobian_wrt_twist,
    se3_left_jacobian,
    so3_exp,
    so3_log,
)


def random_twist(rng, max_angle=3.0, max_trans=100.0):
    w = rng.normal(size=3)
    w *= rng.uniform(0, max_angle) / np.linalg.norm(w)
    rho = rng.uniform(-max_trans, max_trans, 3)
    return Twist.from_parts(w, rho)


def test_exp_zero_is_identity():
    T = exp_se3(Twist.zero())
    assert np.allclose(T.rotation, np.eye(3), atol=1e-15)
    assert np.allclose(T.translation, 0.0, atol=1e-15)


def test_quarter_turn_about_z():
    T = exp_se3(Twist.from_parts([0, 0, np.pi / 2], [0, 0, 0]))
    assert np.allclose(T.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_log_identity_is_zero():
    assert np.allclose(log_se3(RigidTransform.identity()).xi, 0.0, atol=1e-15)


def test_pure_translation_round_trip():
    tw = Twist.from_parts([0, 0, 0], [5.0, 0.0, 0.0])
    assert np.allclose(log_se3(exp_se3(tw)).xi, tw.xi, atol=1e-12)


def test_round_trip_at_angle_03():
    rng = np.random.default_rng(3)
    w = rng.normal(size=3)
    w *= 0.3 / np.linalg.norm(w)
    tw = Twist.from_parts(w, rng.uniform(-50, 50, 3))
    assert np.allclose(log_se3(exp_se3(tw)).xi, tw.xi, atol=1e-9)


def test_round_trips_random(rng):
    for _ in range(200):
        tw = random_twist(rng, max_angle=np.pi - 1e-3)
        back = log_se3(exp_se3(tw))
        assert np.allclose(back.xi, tw.xi, atol=1e-9), tw.xi


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_property(seed):
    rng = np.random.default_rng(seed)
    tw = random_twist(rng, max_angle=np.pi - 1e-2)
    assert np.allclose(log_se3(exp_se3(tw)).xi, tw.xi, atol=1e-9)


def test_log_rejects_angle_at_pi():
    R = so3_exp(np.array([np.pi, 0, 0]))
    with pytest.raises(AngleAtPiError):
        so3_log(R)


def test_compose_inverse_is_identity(rng):
    tw = random_twist(rng)
    T = exp_se3(tw)
    I = T @ T.inverse()
    assert np.abs(I.rotation - np.eye(3)).max() < 1e-9
    assert np.abs(I.translation).max() < 1e-9


def test_rigid_transform_rejects_nonorthonormal():
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 1.001, np.zeros(3))


def test_small_angle_branch_consistency():
    # values straddling the series cutoff agree to high precision
    for scale in (1e-10, 1e-9, 1e-7, 1e-5):
        w = np.array([scale, -scale / 2, scale / 3])
        tw = Twist.from_parts(w, [1.0, 2.0, 3.0])
        back = log_se3(exp_se3(tw))
        assert np.allclose(back.xi, tw.xi, atol=1e-12)


def test_se3_left_jacobian_matches_finite_differences(rng):
    # first-order BCH check: exp(xi + h e_k) ~ exp((Jl h e_k)^) exp(xi)
    for _ in range(25):
        tw = random_twist(rng, max_angle=2.5)
        Jl = se3_left_jacobian(tw.xi)
        h = 1e-6
        for k in range(6):
            d = np.zeros(6)
            d[k] = h
            Tp = exp_se3(Twist(tw.xi + d))
            Tm = exp_se3(Twist(tw.xi - d))
            # eps such that exp(eps^) = Tp Tm^-1 approximately over 2h
            delta = log_se3(Tp @ Tm.inverse())
            assert np.allclose(delta.xi / (2 * h), Jl[:, k], rtol=2e-4, atol=2e-4)


def test_point_jacobian_matches_finite_differences(rng):
    for _ in range(30):
        tw = random_twist(rng, max_angle=2.8)
        x = rng.uniform(-80, 80, 3)
        y = exp_se3(tw).apply(x)
        J = point_jacobian_wrt_twist(y, tw.xi)
        h = 1e-6
        for k in range(6):
            d = np.zeros(6)
            d[k] = h
            yp = exp_se3(Twist(tw.xi + d)).apply(x)
            ym = exp_se3(Twist(tw.xi - d)).apply(x)
            fd = (yp - ym) / (2 * h)
            assert np.allclose(J[:, k], fd, rtol=1e-4, atol=1e-5 * max(1, np.abs(fd).max()))


def test_hat_antisymmetry(rng):
    v = rng.normal(size=3)
    W = hat(v)
    assert np.allclose(W.T, -W)
    u = rng.normal(size=3)
    assert np.allclose(W @ u, np.cross(v, u))
