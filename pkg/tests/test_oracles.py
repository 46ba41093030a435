import pytest

from oracles import FROZEN_LAMBDA1, neumann_interval, neumann_square_distinct, robin_interval_lambda1


@pytest.mark.parametrize("h", sorted(FROZEN_LAMBDA1))
def test_secular_root_is_frozen(h):
    assert robin_interval_lambda1(h) == pytest.approx(FROZEN_LAMBDA1[h], rel=1e-13)


def test_secular_slope_at_zero_is_minus_one():
    d = 1e-5
    slope = (robin_interval_lambda1(d) - robin_interval_lambda1(-d)) / (2 * d)
    assert slope == pytest.approx(-1.0, abs=1e-8)


def test_closed_forms():
    assert neumann_interval(3)[2] == pytest.approx(4 * 9.869604401089358)
    assert neumann_square_distinct(4) / 9.869604401089358 == pytest.approx([0, 1, 2, 4])
