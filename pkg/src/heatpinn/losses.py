"""Data/residual losses for the physics-informed objective.

The data term compares network outputs with boundary measurements in
normalised output units.  The residual term evaluates the PDE residual at
collocation points in physical units and divides it by rho*c_p so both terms
have comparable magnitude.
"""

from dataclasses import dataclass, field

import numpy as np

from . import network
from .heat_model import PhysicalParams, residual
from .network import COL_PK, COL_T, COL_TA, COL_X, INPUT_DIM, NetworkParams, Scaler


class LengthMismatch(ValueError):
    pass


class EmptyBatch(ValueError):
    pass


METRICS = ("mse", "mae")


@dataclass(frozen=True)
class LossSpec:
    """Weights and metric of the composite objective."""

    lambda_u: float = 1.0
    lambda_f: float = 1.0
    metric: str = "mse"

    def __post_init__(self) -> None:
        if self.lambda_u < 0.0 or self.lambda_f < 0.0:
            raise ValueError("loss weights must be nonnegative")
        if self.lambda_u == 0.0 and self.lambda_f == 0.0:
            raise ValueError("at least one loss weight must be positive")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")


@dataclass
class Batch:
    """Boundary measurements plus collocation inputs.

    ``collocation_K`` carries the load factor of each collocation point so
    the MILP encoder can recompute P_K at shifted positions.  ``time_range``
    is the (t0, t_end) window of the originating scenario in seconds.
    """

    boundary_X: np.ndarray                      # (N_u, 5)
    boundary_u: np.ndarray                      # (N_u,)
    collocation_X: np.ndarray                   # (N_f, 5)
    collocation_K: np.ndarray | None = None     # (N_f,)
    time_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        self.boundary_X = np.asarray(self.boundary_X, dtype=float).reshape(-1, INPUT_DIM)
        self.boundary_u = np.asarray(self.boundary_u, dtype=float).reshape(-1)
        self.collocation_X = np.asarray(self.collocation_X, dtype=float).reshape(-1, INPUT_DIM)
        if self.boundary_X.shape[0] != self.boundary_u.shape[0]:
            raise LengthMismatch("boundary inputs and measurements differ in length")
        if not np.all(np.isfinite(self.boundary_u)):
            raise ValueError("boundary measurements must be finite")
        if self.collocation_K is not None:
            self.collocation_K = np.asarray(self.collocation_K, dtype=float).reshape(-1)
            if self.collocation_K.shape[0] != self.collocation_X.shape[0]:
                raise LengthMismatch("collocation_K length mismatch")

    @classmethod
    def from_points(cls, boundary_pairs, collocation_points, collocation_K=None,
                    time_range=None) -> "Batch":
        bx = np.array([np.asarray(p, dtype=float) for p, _ in boundary_pairs]).reshape(-1, INPUT_DIM)
        bu = np.array([float(u) for _, u in boundary_pairs])
        cx = (
            np.array([np.asarray(p, dtype=float) for p in collocation_points]).reshape(-1, INPUT_DIM)
            if len(collocation_points)
            else np.zeros((0, INPUT_DIM))
        )
        return cls(bx, bu, cx, collocation_K, time_range)

    @property
    def n_boundary(self) -> int:
        return self.boundary_X.shape[0]

    @property
    def n_collocation(self) -> int:
        return self.collocation_X.shape[0]


def mse(v, w) -> float:
    """Mean squared componentwise difference."""
    v = np.asarray(v, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if v.shape != w.shape or v.size == 0:
        raise LengthMismatch(f"mse requires equal nonempty lengths, got {v.size} and {w.size}")
    return float(np.mean(np.square(v - w)))


def mae(v, w) -> float:
    """Mean absolute componentwise difference."""
    v = np.asarray(v, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    if v.shape != w.shape or v.size == 0:
        raise LengthMismatch(f"mae requires equal nonempty lengths, got {v.size} and {w.size}")
    return float(np.mean(np.abs(v - w)))


def _metric_value(metric: str, errors: np.ndarray) -> float:
    if metric == "mse":
        return float(np.mean(np.square(errors)))
    return float(np.mean(np.abs(errors)))


def scaled_residuals(params: NetworkParams, scaler: Scaler | None,
                     phys: PhysicalParams, X: np.ndarray) -> np.ndarray:
    """PDE residual at each input row, divided by rho*c_p."""
    u_t, u_xx = network.input_derivatives(params, X, scaler)
    u_hat = network.forward(params, X, scaler)
    f = residual(u_t, u_xx, u_hat, X[:, COL_TA], X[:, COL_PK], phys)
    return f / phys.volumetric_heat_capacity


def composite_loss(params: NetworkParams, scaler: Scaler | None, phys: PhysicalParams,
                   spec: LossSpec, batch: Batch) -> tuple[float, float, float]:
    """Return (total, data term, residual term) of the composite objective."""
    data_term = 0.0
    if spec.lambda_u > 0.0:
        if batch.n_boundary == 0:
            raise EmptyBatch("data term weighted but boundary batch is empty")
        y_hat = network.forward_normalised(params, batch.boundary_X, scaler)
        y = scaler.normalise_output(batch.boundary_u) if scaler is not None else batch.boundary_u
        data_term = _metric_value(spec.metric, y_hat - y)
    residual_term = 0.0
    if spec.lambda_f > 0.0:
        if batch.n_collocation == 0:
            raise EmptyBatch("residual term weighted but collocation batch is empty")
        res = scaled_residuals(params, scaler, phys, batch.collocation_X)
        residual_term = _metric_value(spec.metric, res)
    total = spec.lambda_u * data_term + spec.lambda_f * residual_term
    return total, data_term, residual_term


def composite_loss_and_grad(params: NetworkParams, scaler: Scaler | None,
                            phys: PhysicalParams, spec: LossSpec, batch: Batch):
    """Composite loss plus its exact gradient as a flat parameter vector.

    Returns (total, data term, residual term, grad) with grad ordered like
    :func:`network.params_to_vector`.  The residual path differentiates
    through the closed-form u_t and u_xx expressions.
    """
    W1, b1, W2, b2 = params.W1, params.b1, params.W2, params.b2
    H = params.n_hidden
    if scaler is None:
        sig_x = sig_t = span = 1.0
        scale = None
    else:
        sig_x = scaler.input_std[COL_X]
        sig_t = scaler.input_std[COL_T]
        span = scaler.output_span
        scale = scaler

    gW1 = np.zeros_like(W1)
    gb1 = np.zeros_like(b1)
    gW2 = np.zeros_like(W2)
    gb2 = 0.0

    data_term = 0.0
    if spec.lambda_u > 0.0:
        if batch.n_boundary == 0:
            raise EmptyBatch("data term weighted but boundary batch is empty")
        Nu = batch.n_boundary
        Zb = scale.scale_inputs(batch.boundary_X) if scale else batch.boundary_X
        sb = np.tanh(Zb @ W1.T + b1)
        y_hat = sb @ W2 + b2
        y = scale.normalise_output(batch.boundary_u) if scale else batch.boundary_u
        err = y_hat - y
        data_term = _metric_value(spec.metric, err)
        if spec.metric == "mse":
            gy = (2.0 * spec.lambda_u / Nu) * err
        else:
            gy = (spec.lambda_u / Nu) * np.sign(err)
        gW2 += gy @ sb
        gb2 += float(np.sum(gy))
        dz = gy[:, None] * W2 * (1.0 - sb * sb)
        gb1 += dz.sum(axis=0)
        gW1 += dz.T @ Zb

    residual_term = 0.0
    if spec.lambda_f > 0.0:
        if batch.n_collocation == 0:
            raise EmptyBatch("residual term weighted but collocation batch is empty")
        Nf = batch.n_collocation
        Xf = batch.collocation_X
        Zf = scale.scale_inputs(Xf) if scale else Xf
        sf = np.tanh(Zf @ W1.T + b1)
        a1 = 1.0 - sf * sf
        a2 = -2.0 * sf * a1
        a3 = (6.0 * sf * sf - 2.0) * a1
        W1x = W1[:, COL_X]
        W1t = W1[:, COL_T]
        Ct = span / sig_t
        Cx = span / sig_x**2
        u_t = Ct * (a1 * W1t) @ W2
        u_xx = Cx * (a2 * np.square(W1x)) @ W2
        y_f = sf @ W2 + b2
        u_hat = scale.denormalise_output(y_f) if scale else y_f
        c_eff = phys.rho * phys.c_p if phys.include_density_in_residual else phys.c_p
        f = residual(u_t, u_xx, u_hat, Xf[:, COL_TA], Xf[:, COL_PK], phys)
        rc = phys.volumetric_heat_capacity
        res = f / rc
        residual_term = _metric_value(spec.metric, res)
        if spec.metric == "mse":
            gf = (2.0 * spec.lambda_f / Nf) * res / rc
        else:
            gf = (spec.lambda_f / Nf) * np.sign(res) / rc
        dut = gf * c_eff
        duxx = -phys.k * gf
        duh = phys.h * gf

        # u_t path
        gW2 += Ct * dut @ (a1 * W1t)
        dzf = Ct * dut[:, None] * W2 * W1t * a2
        gW1[:, COL_T] += Ct * W2 * (dut @ a1)
        # u_xx path
        gW2 += Cx * duxx @ (a2 * np.square(W1x))
        dzf += Cx * duxx[:, None] * W2 * np.square(W1x) * a3
        gW1[:, COL_X] += Cx * W2 * 2.0 * W1x * (duxx @ a2)
        # u_hat path
        gW2 += span * duh @ sf
        gb2 += span * float(np.sum(duh))
        dzf += span * duh[:, None] * W2 * a1

        gb1 += dzf.sum(axis=0)
        gW1 += dzf.T @ Zf

    total = spec.lambda_u * data_term + spec.lambda_f * residual_term
    grad = np.concatenate([gW1.ravel(), gb1, gW2, np.array([gb2])])
    return total, data_term, residual_term, grad


def parameter_gradients(params: NetworkParams, scaler: Scaler | None,
                        phys: PhysicalParams, spec: LossSpec,
                        batch: Batch) -> NetworkParams:
    """Gradient of the composite loss for every entry of the parameters."""
    _, _, _, grad = composite_loss_and_grad(params, scaler, phys, spec, batch)
    return network.vector_to_params(grad, params.n_hidden)
