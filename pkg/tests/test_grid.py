import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from segopt.grid import (DegenerateMaskWarning, FormatError, Histogram, bin_counts, bin_indices,
                         coordinate_grids, linear_sum, load_field, load_image, load_mask, save_field,
                         save_image, save_mask, signed_distance)


def brute_signed_distance(s):
    # distance to the nearest midpoint between two 4-neighbours with different labels
    h, w = s.shape
    mids = []
    for y, x in itertools.product(range(h), range(w)):
        if x + 1 < w and s[y, x] != s[y, x + 1]:
            mids.append((y, x + 0.5))
        if y + 1 < h and s[y, x] != s[y + 1, x]:
            mids.append((y + 0.5, x))
    mids = np.array(mids)
    yy, xx = np.mgrid[0:h, 0:w]
    d = np.sqrt((yy[..., None] - mids[:, 0]) ** 2 + (xx[..., None] - mids[:, 1]) ** 2).min(axis=2)
    return np.where(s, -d, d)


# -- linear_sum -----------------------------------------------------------------

def test_linear_sum_examples():
    assert linear_sum(np.ones((10, 10)), np.ones((10, 10), bool)) == 100
    assert linear_sum(np.random.default_rng(0).normal(size=(5, 5)), np.zeros((5, 5), bool)) == 0
    assert linear_sum(np.array([[0.0, 1.0, 2.0]]), np.ones((1, 3), bool)) == 3


def test_linear_sum_shape_mismatch():
    with pytest.raises(ValueError):
        linear_sum(np.ones((3, 3)), np.ones((3, 4), bool))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 7), elements=st.floats(-1e3, 1e3)),
       arrays(np.bool_, (6, 7)), arrays(np.bool_, (6, 7)))
def test_linear_sum_additive_on_disjoint_sets(f, a, b):
    b = b & ~a
    assert linear_sum(f, a | b) == pytest.approx(linear_sum(f, a) + linear_sum(f, b), abs=1e-9)


def test_coordinate_grids_normalized():
    x, y = coordinate_grids((5, 9))
    assert x[0, 0] == 0 and x[0, -1] == 1 and y[-1, 0] == 1
    assert x.shape == (5, 9)


# -- histograms -----------------------------------------------------------------

def test_bin_counts_examples():
    img = np.array([[0, 128], [255, 255]], dtype=float)
    h = bin_counts(img, np.ones((2, 2), bool), 2)
    assert h.counts.tolist() == [[1, 3]]
    s = np.random.default_rng(1).random((8, 8)) < 0.5
    assert bin_counts(np.zeros((8, 8)), s, 10).counts[0, 0] == s.sum()
    assert bin_counts(np.random.default_rng(2).integers(0, 256, (8, 8)), s, 1).counts[0, 0] == s.sum()


def test_bin_indices_edges():
    img = np.array([[0.0, 255.0, 300.0, -4.0]])
    idx = bin_indices(img, 100)
    assert idx.tolist() == [[[0, 99, 99, 0]]]


def test_color_histogram_is_per_channel():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, (6, 6, 3)).astype(float)
    s = rng.random((6, 6)) < 0.5
    h = bin_counts(img, s, 4)
    assert h.counts.shape == (3, 4)
    assert np.all(h.counts.sum(axis=1) == s.sum())
    p = h.normalize()
    assert p.normalized and np.allclose(p.counts.sum(axis=1), 1.0)


def test_histogram_normalize_empty():
    with pytest.raises(ValueError):
        Histogram(np.zeros((1, 4))).normalize()


# -- signed distance ------------------------------------------------------------

def test_signed_distance_single_pixel():
    s = np.zeros((11, 11), bool)
    s[5, 5] = True
    d = signed_distance(s)
    assert d[5, 8] == pytest.approx(2.5)
    assert d[5, 5] == pytest.approx(-0.5)


def test_signed_distance_disk_center():
    yy, xx = np.mgrid[0:81, 0:81]
    r = 25
    s = (yy - 40) ** 2 + (xx - 40) ** 2 <= r * r
    assert signed_distance(s)[40, 40] == pytest.approx(-(r - 0.5), abs=0.5)


def test_signed_distance_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(20):
        s = rng.random((9, 12)) < 0.4
        if s.all() or not s.any():
            continue
        assert np.allclose(signed_distance(s), brute_signed_distance(s))


def test_signed_distance_sign_convention():
    s = np.random.default_rng(5).random((20, 20)) < 0.5
    d = signed_distance(s)
    assert np.all(d[s] < 0) and np.all(d[~s] > 0)
    # pixels touching the other label sit half a pixel from the interface
    edge = s & ~np.pad(s, 1, constant_values=True)[1:-1, 2:]
    assert np.allclose(np.abs(d[edge]), 0.5)


def test_signed_distance_degenerate():
    with pytest.warns(DegenerateMaskWarning):
        d = signed_distance(np.zeros((5, 7), bool))
    assert np.all(d > 0)
    with pytest.warns(DegenerateMaskWarning):
        d = signed_distance(np.ones((5, 7), bool))
    assert np.all(d < 0)
    assert d[2, 3] == pytest.approx(-2.5)


# -- I/O ------------------------------------------------------------------------

def test_mask_roundtrip(tmp_path):
    s = np.random.default_rng(6).random((13, 17)) < 0.3
    save_mask(tmp_path / "m.pgm", s)
    assert np.array_equal(load_mask(tmp_path / "m.pgm"), s)


def test_image_roundtrip_gray_and_color(tmp_path):
    rng = np.random.default_rng(7)
    g = rng.integers(0, 256, (4, 5)).astype(float)
    c = rng.integers(0, 256, (4, 5, 3)).astype(float)
    save_image(tmp_path / "g.pgm", g)
    save_image(tmp_path / "c.ppm", c)
    assert np.array_equal(load_image(tmp_path / "g.pgm"), g)
    out = load_image(tmp_path / "c.ppm")
    assert out.shape == (4, 5, 3) and np.array_equal(out, c)


def test_p5_header_dimensions(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5 4 3 255\n" + bytes(range(12)))
    img = load_image(p)
    assert img.shape == (3, 4)
    assert img[1, 0] == 4


def test_pnm_comments(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n" + bytes([9, 200]))
    assert load_image(p).tolist() == [[9.0, 200.0]]


@pytest.mark.parametrize("data", [
    b"P2 2 2 255\n" + bytes(4),
    b"P5 2 2\n",
    b"P5 2 2 255\n" + bytes(3),
    b"P5 2 2 65535\n" + bytes(8),
    b"P5 x 2 255\n" + bytes(4),
])
def test_malformed_images(tmp_path, data):
    p = tmp_path / "bad.pgm"
    p.write_bytes(data)
    with pytest.raises(FormatError):
        load_image(p)


def test_field_roundtrip(tmp_path):
    f = np.random.default_rng(8).normal(size=(6, 9))
    save_field(tmp_path / "f.sfld", f)
    assert np.array_equal(load_field(tmp_path / "f.sfld"), f)
    raw = (tmp_path / "f.sfld").read_bytes()
    (tmp_path / "t.sfld").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        load_field(tmp_path / "t.sfld")


def test_degenerate_warning_is_silenceable():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        warnings.simplefilter("ignore", DegenerateMaskWarning)
        signed_distance(np.zeros((3, 3), bool))
