import math

import numpy as np
import pytest

from segopt.length import crofton_length, crofton_weights, dirac, length_continuous


def disk(r, size=None, exact=False):
    size = size or int(2 * r + 20)
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    d = np.hypot(yy - c, xx - c) - r
    return d if exact else d <= 0


def test_dirac_values():
    assert dirac(0.0, 1.5) == pytest.approx(2 / 3)
    assert dirac(1.5, 1.5) == 0
    assert dirac(2.0, 1.5) == 0
    t = np.linspace(-3, 3, 61)
    assert np.array_equal(dirac(t, 1.5), dirac(-t, 1.5))
    assert np.all(dirac(t, 1.5) >= 0)


def test_dirac_integrates_to_one():
    t = np.linspace(-1.5, 1.5, 200001)
    assert abs(np.trapezoid(dirac(t, 1.5), t) - 1.0) <= 1e-6


def test_crofton_weights_formula():
    w4 = crofton_weights(4)
    assert np.allclose(w4.weights, math.pi / 4)
    w8 = crofton_weights(8)
    axis = [w for o, w in zip(w8.offsets, w8.weights) if 0 in o]
    diag = [w for o, w in zip(w8.offsets, w8.weights) if 0 not in o]
    assert np.allclose(axis, math.pi / 8)
    assert np.allclose(diag, math.pi / (8 * math.sqrt(2)))
    for order in (4, 8, 16):
        st = crofton_weights(order)
        assert len(st.offsets) == order // 2 and np.all(np.array(st.weights) > 0)
    with pytest.raises(ValueError):
        crofton_weights(6)


@pytest.mark.parametrize("r", [10, 20, 30])
def test_crofton_disk_perimeter(r):
    s = disk(r)
    assert abs(crofton_length(s, 16) / (2 * math.pi * r) - 1) <= 0.02
    assert abs(crofton_length(s, 8) / (2 * math.pi * r) - 1) <= 0.05


def test_crofton_axis_edge_improves_with_order():
    # the weights are exact only on average over orientations; axis edges come out short
    s = np.zeros((40, 40), bool)
    s[:, :17] = True
    lengths = [crofton_length(s, order) for order in (4, 8, 16)]
    assert lengths[0] == pytest.approx(10 * np.pi)
    assert lengths[0] < lengths[1] < lengths[2] < 40.0
    assert lengths[2] >= 0.95 * 40.0


def test_crofton_is_complement_symmetric():
    s = np.random.default_rng(0).random((25, 25)) < 0.4
    assert crofton_length(s, 16) == pytest.approx(crofton_length(~s, 16))


def test_length_continuous_disk():
    phi = disk(30, size=128, exact=True)
    assert abs(length_continuous(phi) / (2 * math.pi * 30) - 1) <= 0.05
    assert length_continuous(np.full((20, 20), 10.0)) == 0


def test_length_continuous_scaling():
    l1 = length_continuous(disk(12, size=100, exact=True))
    l2 = length_continuous(disk(24, size=100, exact=True))
    assert abs(l2 / l1 - 2) <= 0.1
