import sys
from pathlib import Path

import numpy as np
import pytest

SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_conics(rng, n, span=64.0, sigma_max=30.0, opacity_min=0.005):
    """Random positive-definite conics with matching radii and colors.

    Returns (mx, my, a, b, c, opacity, radius, colors); the conic is the
    inverse of a rotated diagonal covariance, and radius matches the
    projection rule ceil(3 sqrt(lambda_max)).
    """
    mx = rng.uniform(-10, span + 10, n)
    my = rng.uniform(-10, span + 10, n)
    s1 = rng.uniform(1.0, sigma_max, n)
    s2 = rng.uniform(1.0, sigma_max, n)
    th = rng.uniform(0, np.pi, n)
    ct, st = np.cos(th), np.sin(th)
    v11 = ct * ct * s1 ** 2 + st * st * s2 ** 2
    v22 = st * st * s1 ** 2 + ct * ct * s2 ** 2
    v12 = ct * st * (s1 ** 2 - s2 ** 2)
    det = v11 * v22 - v12 * v12
    a, b, c = v22 / det, -v12 / det, v11 / det
    opacity = rng.uniform(opacity_min, 1.0, n)
    lam_max = 0.5 * (v11 + v22) + np.sqrt(np.maximum(0.25 * (v11 - v22) ** 2 + v12 * v12, 0))
    radius = np.ceil(3 * np.sqrt(lam_max))
    colors = rng.uniform(0, 1, (n, 3))
    return mx, my, a, b, c, opacity, radius, colors


def make_feature_table(mx, my, a, b, c, opacity, radius, colors, depths=None, ids=None):
    from resplat.preprocess import FeatureTable

    n = len(mx)
    if depths is None:
        depths = np.linspace(1.0, 2.0, n)
    if ids is None:
        ids = np.arange(n, dtype=np.int32)
    return FeatureTable(ids=ids, mean2d=np.stack([mx, my], axis=1),
                        conic=np.stack([a, b, c], axis=1), depth=depths,
                        color=colors, opacity=opacity, radius=radius)


def sequential_blend(mx, my, a, b, c, opacity, colors, px, py, background):
    """Entry-at-a-time front-to-back reference blend (oracle).

    Mirrors the blending definition operation for operation: alphas below
    the cutoff collapse to zero, a pixel stops once its transmittance
    drops under the termination threshold, and the survivor transmittance
    composites the background.
    """
    from resplat.raster import T_MIN, eval_alpha_batch

    n_px = len(px)
    rgb = np.zeros((n_px, 3))
    trans = np.ones(n_px)
    terms = 0
    for i in range(len(mx)):
        alpha = eval_alpha_batch(mx[i:i + 1], my[i:i + 1], a[i:i + 1], b[i:i + 1],
                                 c[i:i + 1], opacity[i:i + 1], px, py)[0]
        active = trans >= T_MIN
        weight = alpha * trans
        weight = weight * active
        terms += int(np.count_nonzero(active & (alpha > 0.0)))
        rgb = rgb + weight[:, None] * colors[i][None, :]
        trans = np.where(active, trans * (1.0 - alpha), trans)
    return rgb + trans[:, None] * np.asarray(background, dtype=np.float64)[None, :], trans, terms


def monolithic_rasterize(table, features, tile_origin, background):
    """Whole-tile reference rasterizer: no subtiles, no bitmaps.

    Blends every entry with a feature record (stale entries cannot be
    blended) in table order over all tile pixels at once.
    """
    from resplat.preprocess import TILE_PX

    rows, present = features.rows_for(table.ids)
    rows = rows[present]
    px = tile_origin[0] + np.tile(np.arange(TILE_PX, dtype=np.float64), TILE_PX)
    py = tile_origin[1] + np.repeat(np.arange(TILE_PX, dtype=np.float64), TILE_PX)
    rgb, _, _ = sequential_blend(
        features.mean2d[rows, 0], features.mean2d[rows, 1],
        features.conic[rows, 0], features.conic[rows, 1], features.conic[rows, 2],
        features.opacity[rows], features.color[rows], px, py, background)
    return rgb.reshape(TILE_PX, TILE_PX, 3)
