import numpy as np

from artsplat.sh import (
    SH_C0,
    SH_C1,
    SH_C2,
    evaluate_sh,
    evaluate_sh_batch,
    sh_basis,
    sh_basis_grad,
    sh_for_rgb,
)


def literal_basis(d):
    """Independent basis table, written out term by term."""
    x, y, z = d
    return np.array(
        [
            SH_C0,
            -SH_C1 * y,
            SH_C1 * z,
            -SH_C1 * x,
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2 * z * z - x * x - y * y),
            SH_C2[3] * x * z,
            SH_C2[4] * (x * x - y * y),
        ]
    )


def test_dc_only_is_isotropic(rng):
    sh = np.zeros(27)
    sh[0:3] = [0.4, -0.2, 0.8]
    for _ in range(5):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        rgb = evaluate_sh(sh, d)
        want = np.clip(np.array([0.4, -0.2, 0.8]) * SH_C0 + 0.5, 0, 1)
        assert np.allclose(rgb, want, atol=1e-12)


def test_degree1_z_coefficient_flips_sign():
    sh = np.zeros((9, 3))
    sh[2, :] = 0.3  # the z-linear row
    up = evaluate_sh(sh.reshape(27), [0, 0, 1.0]) - 0.5
    dn = evaluate_sh(sh.reshape(27), [0, 0, -1.0]) - 0.5
    assert np.allclose(up, -dn, atol=1e-12)
    assert up[0] > 0


def test_matches_literal_polynomial_oracle(rng):
    for _ in range(50):
        sh = rng.normal(size=27) * 0.2
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        want = np.clip(literal_basis(d) @ sh.reshape(9, 3) + 0.5, 0, 1)
        assert np.allclose(evaluate_sh(sh, d), want, atol=1e-12)


def test_batch_matches_single(rng):
    sh = rng.normal(size=(7, 27)) * 0.3
    dirs = rng.normal(size=(7, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    batch = evaluate_sh_batch(sh, dirs)
    for i in range(7):
        assert np.allclose(batch[i], evaluate_sh(sh[i], dirs[i]), atol=1e-14)


def test_basis_grad_matches_finite_differences(rng):
    h = 1e-6
    for _ in range(20):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        g = sh_basis_grad(d)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd = (sh_basis(d + e) - sh_basis(d - e)) / (2 * h)
            assert np.allclose(g[:, k], fd, atol=1e-8)


def test_sh_for_rgb_round_trip(rng):
    rgb = rng.uniform(0.1, 0.9, 3)
    sh = sh_for_rgb(rgb)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    assert np.allclose(evaluate_sh(sh, d), rgb, atol=1e-12)
