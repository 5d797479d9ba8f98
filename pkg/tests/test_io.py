"""CSV matrix round trips and the PGM reader/writer."""

import numpy as np
import pytest

from pmog_bss.errors import ImageFormatError
from pmog_bss.matrixio import load_matrix, save_matrix
from pmog_bss.pgm import read_pgm, to_uint8, write_pgm


class TestMatrixRoundTrip:
    def test_bit_exact(self, tmp_path, rng):
        M = rng.standard_normal((5, 13)) * np.logspace(-150, 150, 13)
        path = tmp_path / "m.csv"
        save_matrix(path, M)
        back = load_matrix(path)
        assert back.shape == M.shape
        assert np.array_equal(back, M)

    def test_line_endings_and_format(self, tmp_path):
        path = tmp_path / "m.csv"
        save_matrix(path, np.array([[1.0, 0.5], [-2.0, 3.25]]))
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw.decode("ascii").splitlines()[0] == "1,0.5"

    def test_single_row(self, tmp_path):
        path = tmp_path / "v.csv"
        save_matrix(path, np.array([1.5, 2.5]))
        assert load_matrix(path).shape == (1, 2)

    def test_ragged_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3\n")
        with pytest.raises(ValueError):
            load_matrix(path)


class TestPgm:
    def test_p5_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(9, 7)).astype(np.uint8)
        path = tmp_path / "img.pgm"
        write_pgm(path, img)
        back = read_pgm(path)
        assert np.array_equal(back, img)

    def test_p2_with_comments(self, tmp_path):
        text = "P2\n# a comment\n3 2 # trailing comment\n255\n0 10 20\n30 40 250\n"
        path = tmp_path / "ascii.pgm"
        path.write_text(text)
        img = read_pgm(path)
        assert np.array_equal(img, [[0, 10, 20], [30, 40, 250]])

    def test_sixteen_bit_p5(self, tmp_path):
        vals = np.array([[0, 300], [70, 65535]], dtype=">u2")
        header = b"P5\n2 2\n65535\n"
        path = tmp_path / "wide.pgm"
        path.write_bytes(header + vals.tobytes())
        img = read_pgm(path)
        assert np.array_equal(img, [[0, 300], [70, 65535]])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.pgm"
        path.write_bytes(b"P6\n1 1\n255\n\x00")
        with pytest.raises(ImageFormatError):
            read_pgm(path)

    def test_truncated_raster(self, tmp_path):
        path = tmp_path / "x.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(ImageFormatError):
            read_pgm(path)

    def test_values_above_maxval_rejected(self, tmp_path):
        path = tmp_path / "x.pgm"
        path.write_text("P2\n2 1\n10\n3 11\n")
        with pytest.raises(ImageFormatError):
            read_pgm(path)

    def test_to_uint8_rescales(self):
        img = np.array([[-1.0, 0.0], [1.0, 3.0]])
        out = to_uint8(img)
        assert out.dtype == np.uint8
        assert out.min() == 0 and out.max() == 255

    def test_to_uint8_constant_image(self):
        assert np.all(to_uint8(np.full((3, 3), 2.5)) == 0)
