"""Real spherical-harmonics color evaluation, degrees 0 through 3.

Uses the basis ordering and sign conventions of the common splat-training
exports, so coefficients loaded from trained point clouds evaluate to the
colors those scenes were trained for. The evaluated color is offset by
+0.5 and clamped to [0, 1].
"""

from __future__ import annotations

import numpy as np

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


def sh_basis(dirs: np.ndarray, n_coeffs: int) -> np.ndarray:
    """Basis values for unit directions ``dirs`` (N, 3) -> (N, n_coeffs)."""
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    out = np.empty((len(dirs), n_coeffs))
    out[:, 0] = SH_C0
    if n_coeffs > 1:
        out[:, 1] = -SH_C1 * y
        out[:, 2] = SH_C1 * z
        out[:, 3] = -SH_C1 * x
    if n_coeffs > 4:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        out[:, 4] = SH_C2[0] * xy
        out[:, 5] = SH_C2[1] * yz
        out[:, 6] = SH_C2[2] * (2.0 * zz - xx - yy)
        out[:, 7] = SH_C2[3] * xz
        out[:, 8] = SH_C2[4] * (xx - yy)
    if n_coeffs > 9:
        out[:, 9] = SH_C3[0] * y * (3.0 * xx - yy)
        out[:, 10] = SH_C3[1] * xy * z
        out[:, 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
        out[:, 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
        out[:, 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
        out[:, 14] = SH_C3[5] * z * (xx - yy)
        out[:, 15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return out


def eval_sh_colors(sh: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Clamped RGB for coefficient sets (N, K, 3) viewed along dirs (N, 3).

    Directions must be unit length within 1e-6.
    """
    sh = np.asarray(sh, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    if len(dirs) and np.abs(np.linalg.norm(dirs, axis=1) - 1.0).max() > 1e-6:
        raise ValueError("view directions must be unit length")
    basis = sh_basis(dirs, sh.shape[1])
    rgb = np.einsum("nk,nkc->nc", basis, sh) + 0.5
    return np.clip(rgb, 0.0, 1.0)


def eval_sh_color(sh: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """Single-splat convenience wrapper around :func:`eval_sh_colors`."""
    sh = np.asarray(sh, dtype=np.float64)
    return eval_sh_colors(sh[None], np.asarray(view_dir, dtype=np.float64)[None])[0]
