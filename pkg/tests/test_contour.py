import numpy as np
import pytest

from sturmspec.contour import ContourError, circle, rectangle, winding_numbers


def test_polynomial_zero_counts():
    f = lambda z: (z - 0.3) ** 2 * (z + 2) * (z - 5j)
    res = winding_numbers(f, [circle(0, 1), circle(0, 3), rectangle(-3, 3, -1, 6), circle(4, 0.5)])
    assert [r.count for r in res] == [2, 3, 4, 0]
    assert max(r.defect for r in res) < 1e-10


def test_rapid_phase_is_refined():
    f = lambda z: z ** 12
    (r,) = winding_numbers(f, [circle(0, 1)], nodes=8)
    assert r.count == 12 and r.nodes > 8


def test_zero_on_contour():
    with pytest.raises(ContourError):
        winding_numbers(lambda z: z - 1, [circle(0, 1)], nodes=8)
