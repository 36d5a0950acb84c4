import math

import numpy as np
import pytest

from heatpinn.heat_model import Domain, PhysicalParams, load_loss, residual, source


def test_table1_defaults():
    p = PhysicalParams()
    assert (p.k, p.rho, p.c_p, p.h, p.P0, p.nu) == (50, 900, 2000, 1000, 15000, 83000)
    assert not p.include_density_in_residual


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(k=0.0)
    with pytest.raises(ValueError):
        PhysicalParams(rho=-1.0)
    with pytest.raises(ValueError):
        PhysicalParams(P0=-5.0)
    # zeroed loss terms are allowed for degenerate test setups
    PhysicalParams(P0=0.0, nu=0.0, h=0.0)


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain(x0=1.0, x_end=1.0)
    with pytest.raises(ValueError):
        Domain(t0=10.0, t_end=5.0)


def test_load_loss_examples():
    assert load_loss(1.0, 1.0 / 6.0, 83000.0) == pytest.approx(83000.0)
    assert load_loss(0.0, 0.7, 83000.0) == 0.0
    assert load_loss(0.5, 0.5, 83000.0) == pytest.approx(0.0, abs=1e-9)


def test_load_loss_periodic_and_nonnegative():
    rng = np.random.default_rng(0)
    x = rng.uniform(-2.0, 2.0, 200)
    K = rng.uniform(0.0, 1.5, 200)
    v = load_loss(K, x, 83000.0)
    assert np.all(v >= -1e-9)
    assert np.allclose(v, load_loss(K, x + 2.0 / 3.0, 83000.0), atol=1e-6)


def test_source_examples(table1):
    assert source(300.0, 0.7, 0.0, 300.0, 0.0, table1) == pytest.approx(15000.0)
    assert source(301.0, 0.7, 0.0, 300.0, 0.0, table1) == pytest.approx(14000.0)
    assert source(300.0, 1.0 / 6.0, 0.0, 300.0, 1.0, table1) == pytest.approx(98000.0)


def test_source_at_ambient_independent_of_h():
    for h in (1.0, 1000.0, 123456.0):
        p = PhysicalParams(h=h)
        assert source(290.0, 0.3, 5.0, 290.0, 0.8, p) == pytest.approx(
            source(290.0, 0.3, 5.0, 290.0, 0.8, PhysicalParams(h=1.0))
        )


def test_residual_examples(table1):
    zero = PhysicalParams(P0=0.0, nu=0.0, h=0.0)
    assert residual(0.0, 0.0, 300.0, 300.0, 0.0, zero) == 0.0
    assert residual(1.0, 0.0, 300.0, 300.0, 0.0, table1) == pytest.approx(2000.0 - 15000.0)
    assert residual(0.0, 1.0, 300.0, 300.0, 0.0, zero) == pytest.approx(-50.0)


def test_residual_density_flag():
    on = PhysicalParams(include_density_in_residual=True, P0=0.0, nu=0.0, h=0.0)
    off = PhysicalParams(include_density_in_residual=False, P0=0.0, nu=0.0, h=0.0)
    assert residual(1.0, 0.0, 300.0, 300.0, 0.0, on) == pytest.approx(900.0 * 2000.0)
    assert residual(1.0, 0.0, 300.0, 300.0, 0.0, off) == pytest.approx(2000.0)


def test_residual_affine_superposition(table1):
    # residual(a + b) + residual(0) == residual(a) + residual(b): affine in
    # the five value arguments with constant part -P0.
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = rng.normal(0.0, 10.0, 5)
        b = rng.normal(0.0, 10.0, 5)
        ra = residual(a[0], a[1], a[2], a[3], a[4], table1)
        rb = residual(b[0], b[1], b[2], b[3], b[4], table1)
        rab = residual(*(a + b), table1)
        r0 = residual(0.0, 0.0, 0.0, 0.0, 0.0, table1)
        assert rab + r0 == pytest.approx(ra + rb, rel=1e-12, abs=1e-6)
