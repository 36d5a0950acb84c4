"""Single-hidden-layer tanh network with closed-form input derivatives.

The input vector is ordered [T_a, x, t, T_o, P_K]; that ordering is relied on
by the derivative formulas and by the MILP encoder.  Inputs are z-scored per
column, the output is min-max normalised, and all evaluation routines accept
either a single 5-vector or an (N, 5) batch.
"""

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

INPUT_DIM = 5
COL_TA, COL_X, COL_T, COL_TO, COL_PK = range(INPUT_DIM)

CHECKPOINT_FORMAT_VERSION = 1


class InputPoint(NamedTuple):
    """One network input sample (kelvin, meters, seconds, kelvin, watts)."""

    T_a: float
    x: float
    t: float
    T_o: float
    P_K: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


@dataclass
class NetworkParams:
    """Weights of the network u(X) = W2 . tanh(W1 X + b1) + b2."""

    W1: np.ndarray  # (n_hidden, 5)
    b1: np.ndarray  # (n_hidden,)
    W2: np.ndarray  # (n_hidden,)
    b2: float

    def __post_init__(self) -> None:
        self.W1 = np.asarray(self.W1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.W2 = np.asarray(self.W2, dtype=float).reshape(-1)
        self.b2 = float(self.b2)
        n = self.W1.shape[0]
        if self.W1.shape != (n, INPUT_DIM):
            raise ValueError(f"W1 must be (n_hidden, {INPUT_DIM}), got {self.W1.shape}")
        if self.b1.shape != (n,) or self.W2.shape != (n,):
            raise ValueError("b1 and W2 must both have length n_hidden")
        if not (
            np.all(np.isfinite(self.W1))
            and np.all(np.isfinite(self.b1))
            and np.all(np.isfinite(self.W2))
            and math.isfinite(self.b2)
        ):
            raise ValueError("network parameters must be finite")

    @property
    def n_hidden(self) -> int:
        return self.W1.shape[0]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2)


@dataclass(frozen=True)
class Scaler:
    """Input standardisation and output min-max normalisation."""

    input_mean: np.ndarray   # (5,)
    input_std: np.ndarray    # (5,), strictly positive
    output_min: float
    output_max: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_mean", np.asarray(self.input_mean, dtype=float))
        object.__setattr__(self, "input_std", np.asarray(self.input_std, dtype=float))
        if self.input_mean.shape != (INPUT_DIM,) or self.input_std.shape != (INPUT_DIM,):
            raise ValueError(f"scaler vectors must have length {INPUT_DIM}")
        if np.any(self.input_std <= 0.0):
            raise ValueError("input_std must be strictly positive")
        if not self.output_max > self.output_min:
            raise ValueError("require output_max > output_min")

    @staticmethod
    def identity() -> "Scaler":
        return Scaler(np.zeros(INPUT_DIM), np.ones(INPUT_DIM), 0.0, 1.0)

    @property
    def output_span(self) -> float:
        return self.output_max - self.output_min

    def scale_inputs(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.input_mean) / self.input_std

    def normalise_output(self, u):
        return (np.asarray(u, dtype=float) - self.output_min) / self.output_span

    def denormalise_output(self, y):
        return self.output_min + np.asarray(y, dtype=float) * self.output_span


def glorot_init(seed: int, n_hidden: int) -> NetworkParams:
    """Glorot-normal weights (variance 2/(n_in + n_out)), zero biases."""
    if n_hidden < 1:
        raise ValueError("n_hidden must be >= 1")
    rng = np.random.default_rng(seed)
    w1_std = math.sqrt(2.0 / (INPUT_DIM + n_hidden))
    w2_std = math.sqrt(2.0 / (n_hidden + 1))
    return NetworkParams(
        W1=rng.normal(0.0, w1_std, size=(n_hidden, INPUT_DIM)),
        b1=np.zeros(n_hidden),
        W2=rng.normal(0.0, w2_std, size=n_hidden),
        b2=0.0,
    )


def _prepare(X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    return np.atleast_2d(X), single


def _hidden(params: NetworkParams, Z: np.ndarray) -> np.ndarray:
    return Z @ params.W1.T + params.b1


def forward_normalised(params: NetworkParams, X, scaler: Scaler | None = None):
    """Network output in normalised units (before output de-normalisation)."""
    Xb, single = _prepare(X)
    Z = scaler.scale_inputs(Xb) if scaler is not None else Xb
    y = np.tanh(_hidden(params, Z)) @ params.W2 + params.b2
    return float(y[0]) if single else y


def forward(params: NetworkParams, X, scaler: Scaler | None = None):
    """Predicted temperature in kelvin; ``scaler=None`` evaluates raw."""
    y = forward_normalised(params, X, scaler)
    if scaler is None:
        return y
    out = scaler.denormalise_output(y)
    return float(out) if np.ndim(out) == 0 else out


def sat(x):
    """Piecewise-linear clamp of x to [-1, 1]."""
    return np.clip(x, -1.0, 1.0)


def forward_sat(params: NetworkParams, X, scaler: Scaler | None = None):
    """Like :func:`forward` but with the saturation activation."""
    Xb, single = _prepare(X)
    Z = scaler.scale_inputs(Xb) if scaler is not None else Xb
    y = sat(_hidden(params, Z)) @ params.W2 + params.b2
    if scaler is not None:
        y = scaler.denormalise_output(y)
    return float(y[0]) if single else y


def input_derivatives(params: NetworkParams, X, scaler: Scaler | None = None):
    """First time and second space derivatives of the tanh network output.

    With z = W1 Xs + b1 and s = tanh(z),

        u_t  = span * sum_n W2_n (1 - s_n^2) W1[n, t] / sigma_t
        u_xx = span * sum_n W2_n (-2 s_n (1 - s_n^2)) W1[n, x]^2 / sigma_x^2

    where sigma_t, sigma_x are the input standard deviations of the t and x
    columns and span is the output normalisation range.  T_a, T_o and P_K are
    treated as exogenous inputs held fixed.
    """
    Xb, single = _prepare(X)
    if scaler is None:
        Z, sig_x, sig_t, span = Xb, 1.0, 1.0, 1.0
    else:
        Z = scaler.scale_inputs(Xb)
        sig_x = scaler.input_std[COL_X]
        sig_t = scaler.input_std[COL_T]
        span = scaler.output_span
    s = np.tanh(_hidden(params, Z))
    a1 = 1.0 - s * s
    a2 = -2.0 * s * a1
    u_t = span / sig_t * (a1 * params.W1[:, COL_T]) @ params.W2
    u_xx = span / sig_x**2 * (a2 * np.square(params.W1[:, COL_X])) @ params.W2
    if single:
        return float(u_t[0]), float(u_xx[0])
    return u_t, u_xx


def params_to_vector(params: NetworkParams) -> np.ndarray:
    return np.concatenate(
        [params.W1.ravel(), params.b1, params.W2, np.array([params.b2])]
    )


def vector_to_params(vec: np.ndarray, n_hidden: int) -> NetworkParams:
    vec = np.asarray(vec, dtype=float)
    expected = n_hidden * INPUT_DIM + 2 * n_hidden + 1
    if vec.shape != (expected,):
        raise ValueError(f"expected vector of length {expected}, got {vec.shape}")
    k = n_hidden * INPUT_DIM
    return NetworkParams(
        W1=vec[:k].reshape(n_hidden, INPUT_DIM).copy(),
        b1=vec[k : k + n_hidden].copy(),
        W2=vec[k + n_hidden : k + 2 * n_hidden].copy(),
        b2=float(vec[-1]),
    )


def save_checkpoint(path, params: NetworkParams, scaler: Scaler) -> None:
    """Write parameters and scaler as JSON; floats round-trip exactly."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "n_hidden": params.n_hidden,
        "W1": [[float(v) for v in row] for row in params.W1],
        "b1": [float(v) for v in params.b1],
        "W2": [float(v) for v in params.W2],
        "b2": params.b2,
        "scaler": {
            "input_mean": [float(v) for v in scaler.input_mean],
            "input_std": [float(v) for v in scaler.input_std],
            "output_min": scaler.output_min,
            "output_max": scaler.output_max,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> tuple[NetworkParams, Scaler]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version: {version!r}")
    params = NetworkParams(
        W1=np.array(payload["W1"], dtype=float),
        b1=np.array(payload["b1"], dtype=float),
        W2=np.array(payload["W2"], dtype=float),
        b2=payload["b2"],
    )
    if params.n_hidden != payload["n_hidden"]:
        raise ValueError("checkpoint n_hidden does not match stored arrays")
    sc = payload["scaler"]
    scaler = Scaler(
        input_mean=np.array(sc["input_mean"], dtype=float),
        input_std=np.array(sc["input_std"], dtype=float),
        output_min=sc["output_min"],
        output_max=sc["output_max"],
    )
    return params, scaler
