import numpy as np
import pytest

from artsplat.asset import (
    AssetFormatError,
    Gaussian,
    InstrumentAsset,
    dump_pointcloud,
    load_asset,
    pose_gaussians,
    prune_low_opacity,
    save_asset,
)
from artsplat.kinematics import BIND_FRAMES, FrameId, JointState, KinematicConfig, transform_points
from artsplat.lie import Twist, exp_se3, log_se3
from artsplat.quats import quat_normalize, quat_to_matrix

CFG = KinematicConfig()


def make_asset(rng, n_per_part=5) -> InstrumentAsset:
    gs = []
    for f in BIND_FRAMES:
        for _ in range(n_per_part):
            gs.append(
                Gaussian(
                    mu=rng.uniform(-20, 20, 3),
                    rot=quat_normalize(rng.normal(size=4)),
                    log_scale=rng.uniform(-1.0, 0.5, 3),
                    opacity_logit=float(rng.normal()),
                    sh=rng.normal(size=27) * 0.3,
                    kin_frame=f,
                )
            )
    return InstrumentAsset.from_gaussians(
        gs, CFG, tip_left=np.array([0, 0, 12.0]), tip_right=np.array([0, 0, 12.0])
    )


def random_q(rng):
    return JointState(
        float(rng.uniform(-2, 2)),
        float(rng.uniform(-1, 1)),
        float(rng.uniform(-0.1, 0.8)),
        float(rng.uniform(-0.1, 0.8)),
    )


def random_twist(rng):
    w = rng.normal(size=3)
    w *= rng.uniform(0, 2.0) / np.linalg.norm(w)
    return Twist.from_parts(w, rng.uniform(-100, 100, 3))


def test_rest_pose_positions_unchanged(rng):
    asset = make_asset(rng)
    posed = pose_gaussians(asset, JointState.zero(), Twist.zero())
    shaft = asset.kin_frame == int(FrameId.SHAFT)
    assert np.allclose(posed.mu[shaft], asset.mu[shaft], atol=1e-12)


def test_pure_translation_shifts_mu_keeps_rot(rng):
    asset = make_asset(rng)
    t = np.array([3.0, -7.0, 11.0])
    posed0 = pose_gaussians(asset, JointState.zero(), Twist.zero())
    posed1 = pose_gaussians(asset, JointState.zero(), Twist.from_parts([0, 0, 0], t))
    assert np.allclose(posed1.mu, posed0.mu + t, atol=1e-12)
    assert np.allclose(posed1.rot, posed0.rot, atol=1e-12)


def test_posing_matches_pointwise_transform(rng):
    asset = make_asset(rng)
    q, xi = random_q(rng), random_twist(rng)
    posed = pose_gaussians(asset, q, xi)
    for i in range(asset.n):
        frame = FrameId(int(asset.kin_frame[i]))
        want = transform_points(asset.mu[i], frame, q, xi, CFG)
        assert np.abs(posed.mu[i] - want).max() < 1e-9


def test_posed_rotation_is_rigid_times_rest(rng):
    asset = make_asset(rng)
    q, xi = random_q(rng), random_twist(rng)
    posed = pose_gaussians(asset, q, xi)
    for i in range(asset.n):
        R = quat_to_matrix(posed.rot[i])
        frame = FrameId(int(asset.kin_frame[i]))
        from artsplat.kinematics import chain_with_derivs

        ch = chain_with_derivs(q, CFG, frame)
        want = exp_se3(xi).rotation @ ch.R @ quat_to_matrix(quat_normalize(asset.rot[i]))
        assert np.abs(R - want).max() < 1e-9


def test_posing_compositional_on_mu(rng):
    asset = make_asset(rng)
    q = random_q(rng)
    xi1, xi2 = random_twist(rng), random_twist(rng)
    combined = log_se3(exp_se3(xi2) @ exp_se3(xi1))
    a = pose_gaussians(asset, q, combined).mu
    b = exp_se3(xi2).apply(pose_gaussians(asset, q, xi1).mu)
    assert np.abs(a - b).max() < 1e-9


def test_posing_preserves_other_attributes(rng):
    asset = make_asset(rng)
    posed = pose_gaussians(asset, random_q(rng), random_twist(rng))
    assert posed.log_scale is asset.log_scale
    assert posed.opacity_logit is asset.opacity_logit
    assert posed.sh is asset.sh
    assert len(posed) == asset.n


def test_shaft_mu_independent_of_q(rng):
    asset = make_asset(rng)
    xi = random_twist(rng)
    shaft = asset.kin_frame == int(FrameId.SHAFT)
    a = pose_gaussians(asset, JointState.zero(), xi).mu[shaft]
    b = pose_gaussians(asset, random_q(rng), xi).mu[shaft]
    assert np.allclose(a, b, atol=1e-12)


def test_save_load_round_trip_small(tmp_path, rng):
    asset = make_asset(rng, n_per_part=3)
    p = tmp_path / "a.ags"
    save_asset(asset, p)
    back = load_asset(p)
    for f in ("mu", "rot", "log_scale", "opacity_logit", "sh", "kin_frame", "semantic"):
        assert np.array_equal(getattr(asset, f), getattr(back, f)), f
    assert back.config == asset.config
    assert np.array_equal(back.tip_left, asset.tip_left)


def test_save_load_round_trip_large(tmp_path, rng):
    n = 100_000 // len(BIND_FRAMES)
    asset = make_asset(rng, n_per_part=n)
    p = tmp_path / "big.ags"
    save_asset(asset, p)
    back = load_asset(p)
    assert np.array_equal(asset.mu, back.mu)
    assert np.array_equal(asset.sh, back.sh)
    assert np.array_equal(asset.opacity_logit, back.opacity_logit)


def test_corrupt_magic_raises(tmp_path, rng):
    p = tmp_path / "bad.ags"
    save_asset(make_asset(rng, 2), p)
    data = bytearray(p.read_bytes())
    data[0] = 0x58
    p.write_bytes(bytes(data))
    with pytest.raises(AssetFormatError):
        load_asset(p)


def test_truncated_file_raises(tmp_path, rng):
    p = tmp_path / "trunc.ags"
    save_asset(make_asset(rng, 2), p)
    p.write_bytes(p.read_bytes()[:-10])
    with pytest.raises(AssetFormatError):
        load_asset(p)


def test_prune_noop_at_zero(rng):
    asset = make_asset(rng)
    out = prune_low_opacity(asset, 0.0)
    assert out.n == asset.n


def test_prune_keeps_all_when_above_threshold(rng):
    asset = make_asset(rng)
    asset.opacity_logit[:] = 2.2  # sigmoid ~ 0.9
    out = prune_low_opacity(asset, 0.5)
    assert out.n == asset.n


def test_prune_matches_list_filter(rng):
    asset = make_asset(rng, n_per_part=40)
    eps = 0.5
    out = prune_low_opacity(asset, eps, min_keep=1)
    want = [i for i in range(asset.n) if asset.opacity[i] >= eps]
    # the min_keep floor can only add splats where a part would go near-empty
    assert set(want) <= set(np.flatnonzero(np.isin(asset.mu[:, 0], out.mu[:, 0])))
    got_mask = asset.opacity[np.concatenate([np.flatnonzero(asset.opacity >= eps)])]
    assert out.n >= len(want)
    # exact equality when every part keeps at least min_keep naturally
    per_part_ok = all(
        (asset.opacity[asset.kin_frame == int(f)] >= eps).sum() >= 1 for f in BIND_FRAMES
    )
    if per_part_ok:
        assert out.n == len(want)


def test_pointcloud_dump(tmp_path, rng):
    asset = make_asset(rng, 2)
    p = tmp_path / "pc.txt"
    dump_pointcloud(asset, p)
    lines = p.read_text().strip().splitlines()
    assert len(lines) == asset.n
    assert all(len(l.split()) == 6 for l in lines)


def test_validate_rejects_missing_part(rng):
    asset = make_asset(rng, 2)
    asset.kin_frame[asset.kin_frame == int(FrameId.WRIST)] = int(FrameId.SHAFT)
    asset.semantic = np.array(
        [1 if k == 0 else (3 if k >= 3 else 2) for k in asset.kin_frame], np.uint8
    )
    with pytest.raises(AssetFormatError):
        asset.validate()
