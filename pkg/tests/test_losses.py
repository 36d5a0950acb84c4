import math

import numpy as np
import pytest

from conftest import random_batch, random_input_rows
from heatpinn import network
from heatpinn.heat_model import PhysicalParams
from heatpinn.losses import (Batch, EmptyBatch, LengthMismatch, LossSpec,
                             composite_loss, composite_loss_and_grad, mae, mse,
                             parameter_gradients)
from heatpinn.network import NetworkParams, Scaler
from oracles import fd_loss_gradient, relative_error


def test_mse_examples():
    assert mse([1, 2], [0, 0]) == pytest.approx(2.5)
    assert mse([3, -1, 4], [3, -1, 4]) == 0.0
    assert mse([3], [1]) == pytest.approx(4.0)
    with pytest.raises(LengthMismatch):
        mse([1, 2], [1])
    with pytest.raises(LengthMismatch):
        mse([], [])


def test_mae_examples():
    assert mae([1, 2], [0, 0]) == pytest.approx(1.5)
    assert mae([5], [5]) == 0.0
    assert mae([-3], [1]) == pytest.approx(4.0)
    with pytest.raises(LengthMismatch):
        mae([1], [1, 2])


def test_mae_jensen_inequality():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 20))
        v, w = rng.normal(0, 5, n), rng.normal(0, 5, n)
        assert mae(v, w) <= math.sqrt(mse(v, w)) + 1e-12


def test_loss_spec_validation():
    with pytest.raises(ValueError):
        LossSpec(0.0, 0.0)
    with pytest.raises(ValueError):
        LossSpec(-1.0, 1.0)
    with pytest.raises(ValueError):
        LossSpec(1.0, 1.0, metric="rmse")


def test_composite_loss_perfect_fit(identity_scaler, table1):
    # constant network b2 = target: data term vanishes
    p = NetworkParams(np.zeros((2, 5)), np.zeros(2), np.ones(2), 0.75)
    batch = Batch(np.zeros((3, 5)), np.full(3, 0.75), np.zeros((0, 5)))
    total, du, df = composite_loss(p, None, table1, LossSpec(1.0, 0.0), batch)
    assert total == 0.0 and du == 0.0 and df == 0.0


def test_composite_loss_constant_network_residual(table1):
    # W1 = 0 so u == b2 (raw): residual is computable by hand per point
    rng = np.random.default_rng(1)
    b2 = 305.0
    p = NetworkParams(np.zeros((3, 5)), np.zeros(3), np.ones(3), b2)
    X = random_input_rows(rng, 4)
    batch = Batch(np.zeros((1, 5)), np.zeros(1), X)
    spec = LossSpec(0.0, 1.0, "mse")
    total, du, df = composite_loss(p, None, table1, spec, batch)
    rc = table1.rho * table1.c_p
    expected = np.mean([
        ((-(table1.P0 + X[i, 4] - table1.h * (b2 - X[i, 0]))) / rc) ** 2
        for i in range(4)
    ])
    assert df == pytest.approx(expected, rel=1e-12)
    assert total == pytest.approx(df)


def test_composite_loss_additivity(table1):
    rng = np.random.default_rng(2)
    p = network.glorot_init(0, 4)
    batch = random_batch(rng, 3, 2)
    scaler = Scaler(batch.boundary_X.mean(0), batch.boundary_X.std(0) + 1.0,
                    280.0, 330.0)
    t_u, du, _ = composite_loss(p, scaler, table1, LossSpec(1.0, 0.0), batch)
    t_f, _, df = composite_loss(p, scaler, table1, LossSpec(0.0, 1.0), batch)
    t_both, du2, df2 = composite_loss(p, scaler, table1, LossSpec(1.0, 1.0), batch)
    assert t_both == pytest.approx(du + df, rel=1e-12)
    assert du2 == pytest.approx(du) and df2 == pytest.approx(df)


def test_composite_loss_empty_batch_errors(table1):
    p = network.glorot_init(0, 2)
    empty = Batch(np.zeros((0, 5)), np.zeros(0), np.zeros((0, 5)))
    with pytest.raises(EmptyBatch):
        composite_loss(p, None, table1, LossSpec(1.0, 0.0), empty)
    with pytest.raises(EmptyBatch):
        composite_loss(p, None, table1, LossSpec(0.0, 1.0), empty)


def test_composite_loss_permutation_invariant(table1):
    rng = np.random.default_rng(3)
    p = network.glorot_init(1, 3)
    batch = random_batch(rng, 5, 4)
    scaler = Scaler(np.full(5, 300.0), np.full(5, 10.0), 280.0, 330.0)
    perm = rng.permutation(5)
    permf = rng.permutation(4)
    shuffled = Batch(batch.boundary_X[perm], batch.boundary_u[perm],
                     batch.collocation_X[permf])
    a = composite_loss(p, scaler, table1, LossSpec(1.0, 1.0), batch)
    b = composite_loss(p, scaler, table1, LossSpec(1.0, 1.0), shuffled)
    assert a[0] == pytest.approx(b[0], rel=1e-12)


def test_residual_term_scales_with_forcing():
    # constant network at ambient with h=0: f = -(P0), so the residual term
    # scales quadratically (MSE) and linearly (MAE) in P0
    p = NetworkParams(np.zeros((1, 5)), np.zeros(1), np.ones(1), 300.0)
    X = np.array([[300.0, 0.5, 10.0, 300.0, 0.0]])
    batch = Batch(np.zeros((1, 5)), np.zeros(1), X)
    vals_mse, vals_mae = [], []
    for p0 in (1000.0, 2000.0):
        phys = PhysicalParams(P0=p0, nu=1.0, h=1e-12)
        phys = PhysicalParams(P0=p0, nu=0.0, h=0.0)
        _, _, df_mse = composite_loss(p, None, phys, LossSpec(0.0, 1.0, "mse"), batch)
        _, _, df_mae = composite_loss(p, None, phys, LossSpec(0.0, 1.0, "mae"), batch)
        vals_mse.append(df_mse)
        vals_mae.append(df_mae)
    assert vals_mse[1] / vals_mse[0] == pytest.approx(4.0, rel=1e-9)
    assert vals_mae[1] / vals_mae[0] == pytest.approx(2.0, rel=1e-9)


def test_gradient_zero_at_perfect_data_fit(table1):
    p = NetworkParams(np.zeros((2, 5)), np.zeros(2), np.zeros(2), 0.4)
    batch = Batch(np.array([[0.1, 0.2, 0.3, 0.4, 0.5]]), np.array([0.4]),
                  np.zeros((0, 5)))
    g = parameter_gradients(p, None, table1, LossSpec(1.0, 0.0), batch)
    assert np.all(g.W2 == 0.0) and g.b2 == 0.0
    assert np.all(g.W1 == 0.0) and np.all(g.b1 == 0.0)


def test_gradient_matches_finite_differences(table1):
    rng = np.random.default_rng(4)
    for _ in range(10):
        H = int(rng.integers(1, 6))
        p = NetworkParams(rng.normal(0, 0.5, (H, 5)), rng.normal(0, 0.2, H),
                          rng.normal(0, 0.8, H), rng.normal())
        scaler = Scaler(rng.normal(300, 5, 5), rng.uniform(0.5, 2.5, 5),
                        285.0, 330.0)
        batch = random_batch(rng, 3, 2)
        spec = LossSpec(1.0, 1.0, "mse")
        _, _, _, grad = composite_loss_and_grad(p, scaler, table1, spec, batch)
        fd = fd_loss_gradient(p, scaler, table1, spec, batch)
        assert relative_error(grad, fd).max() < 1e-5


def test_b2_gradient_closed_form(table1):
    # identity scaler: d(data term)/d b2 = (2/N) * sum(u_hat - u)
    rng = np.random.default_rng(5)
    H = 3
    p = NetworkParams(rng.normal(0, 0.4, (H, 5)), rng.normal(0, 0.2, H),
                      rng.normal(0, 0.8, H), rng.normal())
    bx = rng.normal(0, 1, (4, 5))
    bu = rng.normal(0, 1, 4)
    batch = Batch(bx, bu, np.zeros((0, 5)))
    g = parameter_gradients(p, None, table1, LossSpec(1.0, 0.0), batch)
    u_hat = network.forward(p, bx)
    expected = 2.0 / 4 * float(np.sum(u_hat - bu))
    assert g.b2 == pytest.approx(expected, rel=1e-12)
