import numpy as np
import pytest

from resplat.imageio import FrameImage, read_png16, read_ppm, write_png16, write_ppm


def test_ppm_roundtrip_exact_on_8bit_grid(rng):
    img = np.round(rng.uniform(0, 1, (12, 9, 3)) * 255) / 255
    back = read_ppm(write_ppm(img))
    assert np.allclose(back, img, atol=1e-12)


def test_ppm_deterministic(rng):
    img = rng.uniform(0, 1, (6, 6, 3))
    assert write_ppm(img) == write_ppm(img.copy())


def test_ppm_header():
    data = write_ppm(np.zeros((4, 7, 3)))
    assert data.startswith(b"P6\n7 4\n255\n")
    assert len(data) == len(b"P6\n7 4\n255\n") + 4 * 7 * 3


def test_ppm_clips_out_of_range():
    img = np.array([[[2.0, -1.0, 0.5]]])
    data = write_ppm(img)
    assert data.endswith(bytes([255, 0, 128]))


def test_png16_roundtrip_exact_on_16bit_grid(rng):
    img = np.round(rng.uniform(0, 1, (10, 5, 3)) * 65535) / 65535
    back = read_png16(write_png16(img))
    assert np.allclose(back, img, atol=1e-12)


def test_png16_signature():
    data = write_png16(np.zeros((2, 2, 3)))
    assert data.startswith(b"\x89PNG\r\n\x1a\n")
    assert b"IHDR" in data and b"IDAT" in data and data.endswith(b"IEND\xaeB`\x82")


def test_frame_image_validation():
    with pytest.raises(ValueError):
        FrameImage(np.zeros((4, 4)))
    img = FrameImage(np.zeros((4, 6, 3)))
    assert (img.height, img.width) == (4, 6)
