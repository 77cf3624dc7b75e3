"""Scene and camera data model plus deterministic synthetic generators.

A scene is a struct-of-arrays collection of anisotropic 3D splats. Each
splat carries raw (pre-activation) parameters the way trained exports
store them: log-scales, an opacity logit, an unnormalized quaternion in
(w, x, y, z) order, and spherical-harmonics color coefficients. Parameter
arrays are float32 so that disk round-trips are bit-exact; all derived
math is done in float64.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

SH_COEFF_COUNTS = (1, 4, 9, 16)  # degrees 0..3


@dataclass
class Gaussian3D:
    """Single splat, scalar view of one scene row."""

    id: int
    mean: np.ndarray           # (3,) world position
    log_scale: np.ndarray      # (3,) per-axis log standard deviation
    rotation: np.ndarray       # (4,) quaternion (w, x, y, z), not necessarily unit
    opacity_logit: float
    sh: np.ndarray             # (K, 3) SH coefficients, K in {1, 4, 9, 16}


@dataclass
class Scene:
    """Struct-of-arrays splat collection; ids are dense row indices."""

    means: np.ndarray          # (N, 3) float32
    log_scales: np.ndarray     # (N, 3) float32
    rotations: np.ndarray      # (N, 4) float32, (w, x, y, z)
    opacity_logits: np.ndarray  # (N,) float32
    sh: np.ndarray             # (N, K, 3) float32

    def __post_init__(self):
        n = len(self.means)
        self.means = np.ascontiguousarray(self.means, dtype=np.float32).reshape(n, 3)
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float32).reshape(n, 3)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float32).reshape(n, 4)
        self.opacity_logits = np.ascontiguousarray(self.opacity_logits, dtype=np.float32).reshape(n)
        self.sh = np.ascontiguousarray(self.sh, dtype=np.float32)
        if self.sh.ndim != 3 or self.sh.shape[0] != n or self.sh.shape[2] != 3:
            raise ValueError("sh must have shape (N, K, 3)")
        if self.sh.shape[1] not in SH_COEFF_COUNTS:
            raise ValueError(f"sh coefficient count must be one of {SH_COEFF_COUNTS}")
        for name in ("means", "log_scales", "rotations", "opacity_logits", "sh"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")

    def __len__(self) -> int:
        return len(self.means)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self), dtype=np.int32)

    @property
    def sh_degree(self) -> int:
        return int(math.isqrt(self.sh.shape[1])) - 1

    def __getitem__(self, i: int) -> Gaussian3D:
        return Gaussian3D(
            id=int(i),
            mean=self.means[i].copy(),
            log_scale=self.log_scales[i].copy(),
            rotation=self.rotations[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            sh=self.sh[i].copy(),
        )

    @classmethod
    def from_gaussians(cls, gaussians: list[Gaussian3D]) -> "Scene":
        if not gaussians:
            return cls.empty()
        k = len(gaussians[0].sh)
        return cls(
            means=np.array([g.mean for g in gaussians]),
            log_scales=np.array([g.log_scale for g in gaussians]),
            rotations=np.array([g.rotation for g in gaussians]),
            opacity_logits=np.array([g.opacity_logit for g in gaussians]),
            sh=np.array([g.sh for g in gaussians]).reshape(len(gaussians), k, 3),
        )

    @classmethod
    def empty(cls, sh_coeffs: int = 16) -> "Scene":
        return cls(
            means=np.zeros((0, 3)),
            log_scales=np.zeros((0, 3)),
            rotations=np.zeros((0, 4)),
            opacity_logits=np.zeros(0),
            sh=np.zeros((0, sh_coeffs, 3)),
        )


@dataclass
class Camera:
    """Pinhole camera with a world-to-camera rigid transform.

    The camera frame is x-right, y-down, z-forward; depth is camera-space
    z. Pixel (x, y) samples the image plane at float coordinates (x, y).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray      # (3, 3) world-to-camera rotation
    translation: np.ndarray   # (3,) world-to-camera translation
    near: float
    far: float

    def __post_init__(self):
        self.rotation = np.ascontiguousarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.ascontiguousarray(self.translation, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.near < self.far):
            raise ValueError("need 0 < near < far")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err >= 1e-5:
            raise ValueError(f"rotation not orthonormal (deviation {err:.2e})")

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation


@dataclass
class Trajectory:
    """Ordered camera path; all frames share one image size."""

    frames: list[Camera]
    speed_multiplier: float = 1.0

    def __post_init__(self):
        if not self.frames:
            raise ValueError("trajectory needs at least one frame")
        if self.speed_multiplier <= 0:
            raise ValueError("speed_multiplier must be positive")
        w, h = self.frames[0].width, self.frames[0].height
        for cam in self.frames:
            if cam.width != w or cam.height != h:
                raise ValueError("all trajectory frames must share width/height")

    def __len__(self) -> int:
        return len(self.frames)


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a (w, x, y, z) quaternion; normalizes first."""
    q = np.asarray(q, dtype=np.float64).reshape(4)
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise ValueError("zero-norm quaternion")
    w, x, y, z = q / norm
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quaternions_to_rotations(q: np.ndarray) -> np.ndarray:
    """Batch version of :func:`quaternion_to_rotation` for (N, 4) input."""
    q = np.asarray(q, dtype=np.float64).reshape(-1, 4)
    norms = np.linalg.norm(q, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm quaternion")
    w, x, y, z = (q / norms[:, None]).T
    out = np.empty((len(q), 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - w * z)
    out[:, 0, 2] = 2 * (x * z + w * y)
    out[:, 1, 0] = 2 * (x * y + w * z)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - w * x)
    out[:, 2, 0] = 2 * (x * z - w * y)
    out[:, 2, 1] = 2 * (y * z + w * x)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def activate(g: Gaussian3D) -> tuple[float, np.ndarray, np.ndarray]:
    """Activated (opacity, scales, covariance) of one splat.

    opacity = sigmoid(opacity_logit), scales = exp(log_scale), and the
    covariance is R S S^T R^T with R from the normalized quaternion.
    """
    opacity = float(sigmoid(g.opacity_logit))
    scales = np.exp(np.asarray(g.log_scale, dtype=np.float64))
    rot = quaternion_to_rotation(g.rotation)
    m = rot * scales[None, :]
    cov = m @ m.T
    return opacity, scales, cov


def activate_scene(scene: Scene) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch activation: opacities (N,), scales (N, 3), covariances (N, 3, 3)."""
    opacities = sigmoid(scene.opacity_logits)
    scales = np.exp(scene.log_scales.astype(np.float64))
    rots = quaternions_to_rotations(scene.rotations)
    m = rots * scales[:, None, :]
    covs = m @ np.transpose(m, (0, 2, 1))
    return opacities, scales, covs


# ---------------------------------------------------------------------------
# Synthetic scenes and camera paths

# Log-scale distribution relative to the scene cube; chosen so splats
# project to footprints of a few pixels at the default orbit distance.
_SCALE_LOG_FRACTION = 0.011
_SCALE_LOG_SIGMA = 0.35


def synth_scene(n: int, extent: float, seed: int) -> Scene:
    """Deterministic random scene of ``n`` splats in a cube of side ``extent``.

    Means are uniform in the cube, scales log-normal, rotations uniform
    unit quaternions, opacity logits uniform in [-2, 4], and colors come
    from a seeded degree-0 palette. Identical arguments produce a
    bit-identical scene.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if extent <= 0:
        raise ValueError("extent must be positive")
    rng = np.random.default_rng(seed)
    half = extent / 2.0
    means = rng.uniform(-half, half, size=(n, 3))
    log_scales = rng.normal(math.log(_SCALE_LOG_FRACTION * extent), _SCALE_LOG_SIGMA, size=(n, 3))
    quats = rng.normal(size=(n, 4))
    if n:
        quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    logits = rng.uniform(-2.0, 4.0, size=n)
    palette = rng.uniform(0.05, 0.95, size=(n, 3))
    sh = np.zeros((n, 16, 3))
    from .sh import SH_C0  # local import: sh module depends only on numpy

    sh[:, 0, :] = (palette - 0.5) / SH_C0
    return Scene(means=means, log_scales=log_scales, rotations=quats,
                 opacity_logits=logits, sh=sh)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera (rotation, translation) looking from eye at target."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm == 0.0:
        raise ValueError("eye and target coincide")
    forward /= norm
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    rnorm = np.linalg.norm(right)
    if rnorm < 1e-9:
        raise ValueError("view direction collinear with up vector")
    right /= rnorm
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    return rot, -rot @ eye


def _intrinsics(width: int, height: int, fov_deg: float) -> tuple[float, float, float, float]:
    fx = width / (2.0 * math.tan(math.radians(fov_deg) / 2.0))
    return fx, fx, (width - 1) / 2.0, (height - 1) / 2.0


def synth_trajectory(kind: str, frames: int, speed_multiplier: float = 1.0,
                     seed: int = 0, *, extent: float = 10.0,
                     width: int = 512, height: int = 512,
                     fov_deg: float = 60.0,
                     base_step_deg: float = 0.4,
                     hold_frames: int = 0) -> Trajectory:
    """Deterministic smooth camera path around or into the scene cube.

    The path is defined by a continuous base pose function P(j); frame i
    of a path with speed multiplier k is P(k * i), so a 2x path visits
    every second pose of the 1x path. ``hold_frames`` appends static
    copies of the final pose (for motion-stop experiments).

    orbit: circle of radius 1.6 * extent at height 0.35 * extent, looking
    at the cube center; the base angular step is ``base_step_deg``.
    dolly: straight approach toward the center along a seeded direction,
    easing to a stop at 40% of the start distance.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    if speed_multiplier <= 0:
        raise ValueError("speed_multiplier must be positive")
    if kind not in ("orbit", "dolly"):
        raise ValueError(f"unknown trajectory kind: {kind!r}")
    rng = np.random.default_rng(seed)
    fx, fy, cx, cy = _intrinsics(width, height, fov_deg)
    near, far = 0.05 * extent, 6.0 * extent
    phase = rng.uniform(0.0, 2.0 * math.pi)

    if kind == "orbit":
        radius = 1.6 * extent
        zheight = 0.35 * extent

        def pose(j: float) -> np.ndarray:
            angle = phase + math.radians(base_step_deg) * j
            return np.array([radius * math.cos(angle), radius * math.sin(angle), zheight])
    else:
        direction = np.array([math.cos(phase), math.sin(phase), 0.25])
        direction /= np.linalg.norm(direction)
        start = 1.8 * extent
        # Exponential ease-in keeps the camera outside 40% of the start
        # distance no matter how long the path runs.
        rate = math.radians(base_step_deg) * 2.0

        def pose(j: float) -> np.ndarray:
            dist = start * (0.4 + 0.6 * math.exp(-rate * j))
            return direction * dist

    cams = []
    for i in range(frames):
        eye = pose(speed_multiplier * i)
        rot, trans = look_at(eye, (0.0, 0.0, 0.0))
        cams.append(Camera(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height,
                           rotation=rot, translation=trans, near=near, far=far))
    for _ in range(hold_frames):
        last = cams[-1]
        cams.append(Camera(fx=last.fx, fy=last.fy, cx=last.cx, cy=last.cy,
                           width=last.width, height=last.height,
                           rotation=last.rotation.copy(), translation=last.translation.copy(),
                           near=last.near, far=last.far))
    return Trajectory(frames=cams, speed_multiplier=speed_multiplier)


# ---------------------------------------------------------------------------
# Versioned JSON forms (fixtures and CLI artifacts)

SCENE_JSON_VERSION = 1
TRAJECTORY_JSON_VERSION = 1


def scene_to_json(scene: Scene) -> dict:
    return {
        "version": SCENE_JSON_VERSION,
        "count": len(scene),
        "sh_coeffs": int(scene.sh.shape[1]),
        "means": scene.means.astype(np.float32).ravel().tolist(),
        "log_scales": scene.log_scales.ravel().tolist(),
        "rotations": scene.rotations.ravel().tolist(),
        "opacity_logits": scene.opacity_logits.ravel().tolist(),
        "sh": scene.sh.ravel().tolist(),
    }


def scene_from_json(data: dict) -> Scene:
    if data.get("version") != SCENE_JSON_VERSION:
        raise ValueError(f"unsupported scene JSON version: {data.get('version')!r}")
    n = data["count"]
    k = data["sh_coeffs"]
    return Scene(
        means=np.array(data["means"], dtype=np.float32).reshape(n, 3),
        log_scales=np.array(data["log_scales"], dtype=np.float32).reshape(n, 3),
        rotations=np.array(data["rotations"], dtype=np.float32).reshape(n, 4),
        opacity_logits=np.array(data["opacity_logits"], dtype=np.float32).reshape(n),
        sh=np.array(data["sh"], dtype=np.float32).reshape(n, k, 3),
    )


def camera_to_json(cam: Camera) -> dict:
    return {
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "width": cam.width, "height": cam.height,
        "rotation": cam.rotation.ravel().tolist(),
        "translation": cam.translation.tolist(),
        "near": cam.near, "far": cam.far,
    }


def camera_from_json(data: dict) -> Camera:
    return Camera(
        fx=data["fx"], fy=data["fy"], cx=data["cx"], cy=data["cy"],
        width=data["width"], height=data["height"],
        rotation=np.array(data["rotation"]).reshape(3, 3),
        translation=np.array(data["translation"]),
        near=data["near"], far=data["far"],
    )


def trajectory_to_json(traj: Trajectory) -> dict:
    return {
        "version": TRAJECTORY_JSON_VERSION,
        "speed_multiplier": traj.speed_multiplier,
        "frames": [camera_to_json(c) for c in traj.frames],
    }


def trajectory_from_json(data: dict) -> Trajectory:
    if data.get("version") != TRAJECTORY_JSON_VERSION:
        raise ValueError(f"unsupported trajectory JSON version: {data.get('version')!r}")
    return Trajectory(
        frames=[camera_from_json(c) for c in data["frames"]],
        speed_multiplier=data["speed_multiplier"],
    )


def dump_scene_json(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_json(scene), fh)


def load_scene_json(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_json(json.load(fh))
