import numpy as np
import pytest

from resplat.ply import save_ply
from resplat.scene import (Camera, Gaussian3D, Scene, activate,
                           activate_scene, look_at, quaternion_to_rotation,
                           scene_from_json, scene_to_json, synth_scene,
                           synth_trajectory, trajectory_from_json, trajectory_to_json)


def test_activate_identity():
    g = Gaussian3D(id=0, mean=np.zeros(3), log_scale=np.zeros(3),
                   rotation=np.array([1.0, 0, 0, 0]), opacity_logit=0.0,
                   sh=np.zeros((16, 3)))
    opacity, scales, cov = activate(g)
    assert opacity == pytest.approx(0.5)
    assert np.allclose(scales, 1.0)
    assert np.allclose(cov, np.eye(3))


def test_activate_opacity_saturates():
    g = Gaussian3D(id=0, mean=np.zeros(3), log_scale=np.zeros(3),
                   rotation=np.array([1.0, 0, 0, 0]), opacity_logit=20.0,
                   sh=np.zeros((16, 3)))
    opacity, _, _ = activate(g)
    assert opacity > 1.0 - 1e-8


def test_activate_zero_quaternion_rejected():
    g = Gaussian3D(id=0, mean=np.zeros(3), log_scale=np.zeros(3),
                   rotation=np.zeros(4), opacity_logit=0.0, sh=np.zeros((16, 3)))
    with pytest.raises(ValueError):
        activate(g)


def test_covariance_eigenvalues_rotation_invariant(rng):
    # similarity transform preserves the squared scales as eigenvalues
    log_scale = np.log(np.array([1.0, 2.0, 3.0]))
    for _ in range(20):
        q = rng.normal(size=4)
        g = Gaussian3D(id=0, mean=np.zeros(3), log_scale=log_scale,
                       rotation=q, opacity_logit=0.0, sh=np.zeros((16, 3)))
        _, _, cov = activate(g)
        eig = np.sort(np.linalg.eigvalsh(cov))
        assert np.allclose(eig, [1.0, 4.0, 9.0], atol=1e-6)


def test_covariance_positive_definite_random(rng):
    scene = synth_scene(100, 10.0, seed=3)
    _, _, covs = activate_scene(scene)
    for cov in covs[:25]:
        x = rng.normal(size=(100, 3))
        x = x[np.linalg.norm(x, axis=1) > 1e-6]
        assert np.all(np.einsum("ni,ij,nj->n", x, cov, x) > 0)


def test_synth_scene_empty():
    assert len(synth_scene(0, 10.0, seed=0)) == 0


def test_synth_scene_deterministic():
    a = synth_scene(500, 10.0, seed=42)
    b = synth_scene(500, 10.0, seed=42)
    assert save_ply(a) == save_ply(b)
    c = synth_scene(500, 10.0, seed=43)
    assert save_ply(a) != save_ply(c)


def test_synth_scene_invariants():
    scene = synth_scene(1000, 10.0, seed=7)
    _, scales, _ = activate_scene(scene)
    assert np.all(scales > 0)
    norms = np.linalg.norm(scene.rotations.astype(np.float64), axis=1)
    assert np.all(np.abs(norms - 1.0) < 1e-6)
    assert np.all(np.abs(scene.means) <= 5.0)
    assert scene.sh.shape == (1000, 16, 3)


def test_quaternion_rotation_orthonormal(rng):
    for _ in range(10):
        rot = quaternion_to_rotation(rng.normal(size=4))
        assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(rot) == pytest.approx(1.0)


def test_camera_validation():
    rot, trans = look_at((10.0, 0, 0), (0, 0, 0))
    cam = Camera(fx=100, fy=100, cx=63.5, cy=63.5, width=128, height=128,
                 rotation=rot, translation=trans, near=0.1, far=100)
    assert np.allclose(cam.center, [10, 0, 0])
    with pytest.raises(ValueError):
        Camera(fx=-1, fy=100, cx=0, cy=0, width=128, height=128,
               rotation=rot, translation=trans, near=0.1, far=100)
    with pytest.raises(ValueError):
        Camera(fx=100, fy=100, cx=0, cy=0, width=128, height=128,
               rotation=rot, translation=trans, near=5.0, far=1.0)
    with pytest.raises(ValueError):
        Camera(fx=100, fy=100, cx=0, cy=0, width=128, height=128,
               rotation=np.eye(3) + 0.01, translation=trans, near=0.1, far=100)


def test_trajectory_single_frame():
    traj = synth_trajectory("orbit", 1, 1.0, seed=0)
    assert len(traj) == 1


def test_trajectory_zero_frames_rejected():
    with pytest.raises(ValueError):
        synth_trajectory("orbit", 0, 1.0, seed=0)


@pytest.mark.parametrize("kind", ["orbit", "dolly"])
def test_speed_multiplier_subsamples_base_path(kind):
    base = synth_trajectory(kind, 30, 1.0, seed=9)
    fast = synth_trajectory(kind, 15, 2.0, seed=9)
    for i in range(15):
        assert np.allclose(fast.frames[i].rotation, base.frames[2 * i].rotation)
        assert np.allclose(fast.frames[i].translation, base.frames[2 * i].translation)


def test_orbit_angular_step_constant():
    traj = synth_trajectory("orbit", 60, 1.0, seed=5)
    centers = np.array([cam.center for cam in traj.frames])
    angles = np.unwrap(np.arctan2(centers[:, 1], centers[:, 0]))
    steps = np.diff(angles)
    assert np.all(np.abs(steps - steps[0]) < 1e-9)


def test_trajectory_hold_frames_static():
    traj = synth_trajectory("orbit", 5, 1.0, seed=5, hold_frames=3)
    assert len(traj) == 8
    for cam in traj.frames[5:]:
        assert np.array_equal(cam.rotation, traj.frames[4].rotation)
        assert np.array_equal(cam.translation, traj.frames[4].translation)


def test_scene_json_roundtrip():
    scene = synth_scene(50, 10.0, seed=1)
    back = scene_from_json(scene_to_json(scene))
    assert save_ply(back) == save_ply(scene)


def test_trajectory_json_roundtrip():
    traj = synth_trajectory("dolly", 4, 2.0, seed=2)
    back = trajectory_from_json(trajectory_to_json(traj))
    assert len(back) == len(traj)
    for a, b in zip(traj.frames, back.frames):
        assert np.array_equal(a.rotation, b.rotation)
        assert np.array_equal(a.translation, b.translation)
        assert (a.fx, a.fy, a.cx, a.cy) == (b.fx, b.fy, b.cx, b.cy)


def test_scene_getitem_roundtrip():
    scene = synth_scene(10, 10.0, seed=6)
    rebuilt = Scene.from_gaussians([scene[i] for i in range(len(scene))])
    assert save_ply(rebuilt) == save_ply(scene)
