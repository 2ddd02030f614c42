import numpy as np
import pytest

from pnplab.errors import ConfigurationError, UsageError
from pnplab.grid import Grid


def test_zeros_shape_and_flat():
    g = Grid.zeros((2, 3, 4, 1))
    assert g.shape == (2, 3, 4, 1)
    assert g.size == 24
    assert g.flat().shape == (24,)


def test_from_flat_length_check():
    with pytest.raises(ConfigurationError):
        Grid.from_flat(np.zeros(5), (1, 1, 1, 2))
    g = Grid.from_flat([1.0, 2.0], (1, 1, 1, 2))
    assert g.data[0, 0, 0, 1] == 2.0


def test_rejects_non_finite():
    with pytest.raises(UsageError):
        Grid(np.full((1, 1, 1, 1), np.nan))
    with pytest.raises(UsageError):
        Grid(np.full((1, 1, 1, 1), np.inf))


def test_rejects_wrong_rank():
    with pytest.raises(ConfigurationError):
        Grid(np.zeros((2, 2)))


def test_elementwise_requires_same_shape():
    a = Grid.zeros((1, 1, 2, 2))
    b = Grid.zeros((1, 1, 1, 2))
    with pytest.raises(UsageError):
        _ = a + b


def test_add_sub_scale():
    a = Grid.full((1, 1, 1, 2), 2.0)
    b = Grid.full((1, 1, 1, 2), 0.5)
    assert (a + b).data[0, 0, 0, 0] == 2.5
    assert (a - b).data[0, 0, 0, 0] == 1.5
    assert a.scale(-2.0).data[0, 0, 0, 1] == -4.0


def test_points_round_trip():
    pts = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    g = Grid.from_points(pts)
    assert g.shape == (1, 1, 3, 2)
    assert np.array_equal(g.points(), pts)
    with pytest.raises(UsageError):
        Grid.zeros((2, 1, 1, 2)).points()


def test_immutability():
    g = Grid.zeros((1, 1, 1, 2))
    with pytest.raises(ValueError):
        g.data[0, 0, 0, 0] = 1.0


def test_equality_is_exact():
    a = Grid.full((1, 1, 1, 2), 0.1)
    b = Grid.full((1, 1, 1, 2), 0.1)
    c = Grid.full((1, 1, 1, 2), 0.1 + 1e-16)
    assert a == b
    assert a != c  # one ulp apart is already unequal
