import numpy as np
import pytest

from latentlab import ppm
from latentlab.errors import ParseError, ShapeError, ValidationError


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(7, 5, 3), dtype=np.uint8)
    path = tmp_path / "img.ppm"
    ppm.write_ppm(path, pixels)
    assert np.array_equal(ppm.read_ppm(path), pixels)


def test_header_layout():
    pixels = np.zeros((2, 3, 3), dtype=np.uint8)
    data = ppm.ppm_bytes(pixels)
    assert data.startswith(b"P6\n3 2\n255\n")
    assert len(data) == len(b"P6\n3 2\n255\n") + 18


def test_comments_and_whitespace_tolerated():
    raw = b"P6 # format\n# a comment line\n  2\t1 # dims\n255\n" + bytes(6)
    img = ppm.parse_ppm(raw)
    assert img.shape == (1, 2, 3)


def test_truncated_data():
    raw = b"P6\n4 4\n255\n" + bytes(10)
    with pytest.raises(ParseError, match="truncated"):
        ppm.parse_ppm(raw)


def test_wrong_magic():
    with pytest.raises(ParseError, match="P6"):
        ppm.parse_ppm(b"P5\n2 2\n255\n" + bytes(4))


def test_unsupported_maxval():
    with pytest.raises(ParseError, match="maxval"):
        ppm.parse_ppm(b"P6\n1 1\n65535\n" + bytes(6))


def test_empty_file():
    with pytest.raises(ParseError):
        ppm.parse_ppm(b"")


def test_bad_dimensions():
    with pytest.raises(ParseError):
        ppm.parse_ppm(b"P6\n0 3\n255\n")
    with pytest.raises(ParseError, match="non-numeric"):
        ppm.parse_ppm(b"P6\nx 3\n255\n")


def test_unit_conversion_exact_for_all_byte_values():
    u8 = np.arange(256, dtype=np.uint8).reshape(-1, 1, 1).repeat(3, axis=2)
    unit = ppm.to_unit(u8)
    assert unit.min() == 0.0 and unit.max() == 1.0
    back = ppm.to_bytes8(unit)
    assert np.array_equal(back, u8)


def test_to_bytes8_rejects_out_of_range():
    with pytest.raises(ValidationError):
        ppm.to_bytes8(np.array([[[0.0, 0.5, 1.2]]]))


def test_ppm_bytes_validates_shape_and_dtype():
    with pytest.raises(ValidationError):
        ppm.ppm_bytes(np.zeros((2, 2, 3), dtype=float))
    with pytest.raises(ShapeError):
        ppm.ppm_bytes(np.zeros((2, 2), dtype=np.uint8))
