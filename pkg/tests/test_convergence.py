import math

import pytest

from fracalc.convergence import observed_orders, run_study
from fracalc.errors import ConfigError


def test_frac_integral_of_square_is_second_order():
    rows = run_study({"problem": "frac_integral", "alpha": 0.5, "exponent": 2, "n_list": [256, 512, 1024, 2048]})
    assert min(r.order for r in rows[1:]) >= 1.8


def test_ode_manufactured_order():
    rows = run_study({"problem": "ode", "alpha": 0.6, "n_list": [128, 256, 512]})
    assert min(r.order for r in rows[1:]) >= 1.0


def test_pde_spatial_order_at_fixed_time_grid():
    rows = run_study({"problem": "pde", "alpha": 0.5, "h_list": [0.1, 0.05, 0.025], "grid_n": 512})
    assert {r.n for r in rows} == {512}
    assert min(r.order for r in rows[1:]) >= 1.8


def test_observed_orders_of_exact_power_law():
    hs = [0.1, 0.05, 0.025]
    orders = observed_orders(hs, [h**1.5 for h in hs])
    assert math.isnan(orders[0])
    assert orders[1:] == pytest.approx([1.5, 1.5])


def test_pde_study_needs_spatial_list():
    with pytest.raises(ConfigError):
        run_study({"problem": "pde", "alpha": 0.5})
