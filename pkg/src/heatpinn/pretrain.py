"""Mixed-integer encoding of the network pre-training problems.

The hidden activation is replaced by the saturation sat(x) = clamp(x, -1, 1),
encoded per instance with four simplex weights and a one-hot zone triple:

    sat = -g1 - g2 + g3 + g4
    x   = -M g1 - g2 + g3 + M g4
    0 <= g1 <= b1,  0 <= g2 <= b1 + b2,  0 <= g3 <= b2 + b3,  0 <= g4 <= b3
    g1 + g2 + g3 + g4 = 1,  b1 + b2 + b3 = 1,  b binary

With the output weights frozen the network output is affine in the remaining
weights, so fitting the mean absolute error becomes a MILP.  The full variant
adds a finite-difference PDE residual at collocation points, which stays
affine because the governing equation is linear in the temperature.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import milp, network
from .heat_model import PhysicalParams, load_loss
from .losses import Batch
from .milp import LinExpr, MilpModel, MilpSolution, lin_sum
from .network import COL_PK, COL_T, COL_TA, COL_X, INPUT_DIM, NetworkParams, Scaler

MODE_BOUNDARY = "boundary"
MODE_FULL = "full"

ZONE_NEG, ZONE_LIN, ZONE_POS = 0, 1, 2


class PretrainError(ValueError):
    pass


class MissingVariable(KeyError):
    pass


class DecodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class SatEncoding:
    """Bookkeeping for one saturation instance inside a model."""

    sat: str
    gammas: tuple[str, str, str, str]
    betas: tuple[str, str, str]
    x_terms: dict
    x_const: float

    def x_value(self, values: dict) -> float:
        return self.x_const + sum(c * values[n] for n, c in self.x_terms.items())

    def zone_value(self, values: dict) -> int:
        return int(np.argmax([values[b] for b in self.betas]))


@dataclass(frozen=True)
class PretrainConfig:
    """Settings of a pre-training solve.

    ``big_m``, ``epsilon_t`` and ``epsilon_x`` may be left None to be derived
    from the dataset: the big-M from the weight box and the scaled input
    magnitudes, the finite-difference steps as 1% of the scaled t and x
    ranges.  Epsilons are in scaled input units.
    """

    mode: str
    w2_fixed: np.ndarray
    weight_box: float = 5.0
    big_m: float | None = None
    epsilon_t: float | None = None
    epsilon_x: float | None = None
    lambda_u: float = 1.0
    lambda_f: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "w2_fixed", np.asarray(self.w2_fixed, dtype=float).reshape(-1))
        if self.mode not in (MODE_BOUNDARY, MODE_FULL):
            raise ValueError(f"mode must be {MODE_BOUNDARY!r} or {MODE_FULL!r}")
        if self.weight_box <= 0.0:
            raise ValueError("weight_box must be positive")
        for name in ("epsilon_t", "epsilon_x"):
            v = getattr(self, name)
            if v is not None and v <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_u < 0.0 or self.lambda_f < 0.0:
            raise ValueError("objective weights must be nonnegative")

    @property
    def n_hidden(self) -> int:
        return self.w2_fixed.size


@dataclass
class PretrainModel:
    """A built MILP plus the context needed to decode its solutions."""

    milp: MilpModel
    config: PretrainConfig
    scaler: Scaler
    boundary_Z: np.ndarray
    boundary_y: np.ndarray
    encodings: list
    data_error_vars: list
    residual_error_vars: list

    @property
    def n_hidden(self) -> int:
        return self.config.n_hidden

    def weight_names(self):
        H = self.n_hidden
        w1 = [[f"w1_{n}_{j}" for j in range(INPUT_DIM)] for n in range(H)]
        b1 = [f"b1_{n}" for n in range(H)]
        return w1, b1, "b2"


def required_big_m(rows: np.ndarray, weight_box: float) -> float:
    """Smallest admissible big-M for the given scaled input rows."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    col_max = np.abs(rows).max(axis=0) if rows.size else np.zeros(rows.shape[1])
    return max(1.0, weight_box * (1.0 + float(col_max.sum())) + weight_box)


def build_scaler(batch: Batch, scenario=None) -> Scaler:
    """z-score inputs over the training rows; min-max the output.

    The output range comes from the scenario's boundary temperature series
    when available, otherwise from the batch measurements.  Constant input
    columns get unit scale; a degenerate output range is widened to 1 K.
    """
    rows = [batch.boundary_X]
    if batch.n_collocation:
        rows.append(batch.collocation_X)
    X = np.vstack(rows)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std <= 0.0] = 1.0
    if scenario is not None:
        pool = np.concatenate([scenario.T_a, scenario.T_o])
    else:
        pool = batch.boundary_u
    omin, omax = float(pool.min()), float(pool.max())
    if omax <= omin:
        omin, omax = omin - 0.5, omin + 0.5
    return Scaler(mean, std, omin, omax)


def encode_sat(model: MilpModel, x_expr: LinExpr, M: float, prefix: str) -> tuple[LinExpr, SatEncoding]:
    """Add one saturation instance; returns the sat variable expression.

    Requires M >= 1 and every feasible value of ``x_expr`` inside [-M, M].
    """
    if M < 1.0:
        raise PretrainError(f"big-M must be >= 1, got {M}")
    lo, hi = model.expr_interval(x_expr)
    if lo < -M - 1e-9 or hi > M + 1e-9:
        raise PretrainError(
            f"pre-activation range [{lo:.3g}, {hi:.3g}] exceeds [-M, M] with M={M:.3g}"
        )
    sat = model.add_var(f"{prefix}_sat", -1.0, 1.0)
    g = [model.add_var(f"{prefix}_g{i}", 0.0, 1.0) for i in range(1, 5)]
    b = [model.add_var(f"{prefix}_b{i}", 0.0, 1.0, binary=True) for i in range(1, 4)]
    model.add_constraint(sat + g[0] + g[1] - g[2] - g[3], "=", 0.0, name=f"{prefix}_def")
    model.add_constraint(
        x_expr + M * g[0] + g[1] - g[2] - M * g[3], "=", 0.0, name=f"{prefix}_x"
    )
    model.add_constraint(g[0] - b[0], "<=", 0.0, name=f"{prefix}_z1")
    model.add_constraint(g[1] - b[0] - b[1], "<=", 0.0, name=f"{prefix}_z2")
    model.add_constraint(g[2] - b[1] - b[2], "<=", 0.0, name=f"{prefix}_z3")
    model.add_constraint(g[3] - b[2], "<=", 0.0, name=f"{prefix}_z4")
    model.add_constraint(lin_sum(g), "=", 1.0, name=f"{prefix}_gsum")
    model.add_constraint(lin_sum(b), "=", 1.0, name=f"{prefix}_bsum")
    enc = SatEncoding(
        sat=f"{prefix}_sat",
        gammas=tuple(f"{prefix}_g{i}" for i in range(1, 5)),
        betas=tuple(f"{prefix}_b{i}" for i in range(1, 4)),
        x_terms=dict(x_expr.terms),
        x_const=x_expr.const,
    )
    model.register_triple(*enc.betas)
    return sat, enc


def encode_abs(model: MilpModel, expr: LinExpr, name: str) -> LinExpr:
    """Variable e >= |expr|, tight at any optimum that minimises +e."""
    lo, hi = model.expr_interval(expr)
    e = model.add_var(name, 0.0, max(abs(lo), abs(hi)))
    model.add_constraint(expr - e, "<=", 0.0, name=f"{name}_pos")
    model.add_constraint(-1.0 * expr - e, "<=", 0.0, name=f"{name}_neg")
    return e


def zone_gamma_values(x: float, zone: int, M: float) -> dict:
    """Gamma weights reproducing pre-activation x inside the given zone."""
    g = [0.0, 0.0, 0.0, 0.0]
    if zone == ZONE_NEG:
        g[0] = (-1.0 - x) / (M - 1.0) if M > 1.0 else 0.0
        g[1] = 1.0 - g[0]
    elif zone == ZONE_LIN:
        g[2] = (1.0 + x) / 2.0
        g[1] = 1.0 - g[2]
    else:
        g[3] = (x - 1.0) / (M - 1.0) if M > 1.0 else 0.0
        g[2] = 1.0 - g[3]
    return {i: min(max(v, 0.0), 1.0) for i, v in enumerate(g)}


def zone_of(x: float) -> int:
    if x < -1.0:
        return ZONE_NEG
    if x <= 1.0:
        return ZONE_LIN
    return ZONE_POS


def _zone_overrides(pm: PretrainModel, zones) -> dict:
    overrides = {}
    for enc, z in zip(pm.encodings, zones):
        for k, b in enumerate(enc.betas):
            overrides[b] = (1.0, 1.0) if k == z else (0.0, 0.0)
    return overrides


def _attach_completion_hint(pm: PretrainModel) -> None:
    """Primal heuristic: fix zones implied by the relaxation weights and
    re-solve the LP, yielding a feasible incumbent for the search.

    The all-linear zone pattern (every pre-activation in [-1, 1]) is probed
    on the first call; repeated patterns are cached.
    """
    tried: set = set()
    first_call = [True]

    def hint(values: dict):
        patterns = []
        if first_call[0]:
            first_call[0] = False
            patterns.append(tuple(ZONE_LIN for _ in pm.encodings))
        patterns.append(tuple(zone_of(enc.x_value(values)) for enc in pm.encodings))
        out = []
        for pattern in patterns:
            if pattern in tried:
                continue
            tried.add(pattern)
            status, vals, _ = milp.solve_lp(pm.milp, _zone_overrides(pm, pattern))
            if status == milp.OPTIMAL:
                out.append(vals)
        return out

    pm.milp.feasibility_hint = hint


def _declare_weights(model: MilpModel, config: PretrainConfig):
    H = config.n_hidden
    box = config.weight_box
    W1 = [
        [model.add_var(f"w1_{n}_{j}", -box, box) for j in range(INPUT_DIM)]
        for n in range(H)
    ]
    b1 = [model.add_var(f"b1_{n}", -box, box) for n in range(H)]
    b2 = model.add_var("b2", -box, box)
    return W1, b1, b2


def _pre_activation(W1_row, b1_n, z_row: np.ndarray) -> LinExpr:
    return lin_sum(W1_row[j] * float(z_row[j]) for j in range(INPUT_DIM)) + b1_n


def _encode_layer(model, config, W1, b1, z_row, M, prefix, encodings):
    """Encode all neurons at one input row; returns the sat expressions."""
    sats = []
    for n in range(config.n_hidden):
        x_expr = _pre_activation(W1[n], b1[n], z_row)
        s, enc = encode_sat(model, x_expr, M, f"{prefix}_n{n}")
        sats.append(s)
        encodings.append(enc)
    return sats


def _output_expr(config: PretrainConfig, sats, b2) -> LinExpr:
    return lin_sum(float(config.w2_fixed[n]) * sats[n] for n in range(config.n_hidden)) + b2


def build_boundary_model(batch: Batch, scaler: Scaler, config: PretrainConfig) -> PretrainModel:
    """MILP fitting the boundary measurements in mean absolute error.

    Decision variables are the hidden weights, hidden biases and output bias;
    the output weights stay at ``config.w2_fixed``.  Targets are in
    normalised output units.
    """
    if batch.n_boundary < 1:
        raise PretrainError("boundary set must not be empty")
    if config.mode != MODE_BOUNDARY:
        raise PretrainError("config mode must be 'boundary'")
    Z = scaler.scale_inputs(batch.boundary_X)
    y = scaler.normalise_output(batch.boundary_u)
    M = config.big_m if config.big_m is not None else required_big_m(Z, config.weight_box)
    if M < required_big_m(Z, config.weight_box) - 1e-9:
        raise PretrainError("big_m too small for the dataset")
    config = replace(config, big_m=M)

    model = MilpModel(f"pretrain_boundary_{config.n_hidden}n")
    W1, b1, b2 = _declare_weights(model, config)
    encodings: list[SatEncoding] = []
    err_vars = []
    objective = LinExpr()
    Nu = batch.n_boundary
    for i in range(Nu):
        sats = _encode_layer(model, config, W1, b1, Z[i], M, f"u{i}", encodings)
        y_hat = _output_expr(config, sats, b2)
        e = encode_abs(model, y_hat - float(y[i]), f"e_u{i}")
        err_vars.append(f"e_u{i}")
        objective = objective + (1.0 / Nu) * e
    model.set_objective(objective)
    pm = PretrainModel(model, config, scaler, Z, y, encodings, err_vars, [])
    _attach_completion_hint(pm)
    return pm


def build_full_model(batch: Batch, scaler: Scaler, phys: PhysicalParams,
                     config: PretrainConfig, time_range=None) -> PretrainModel:
    """Boundary model extended with a finite-difference residual penalty.

    Every collocation point contributes four saturation layers, one per
    evaluation point (t), (t+eps_t), (x-eps_x), (x+eps_x).  The shifted
    points keep the point's exogenous series values but recompute the load
    loss at the shifted position.  The residual is scaled by rho*c_p before
    entering the objective.
    """
    if config.mode != MODE_FULL:
        raise PretrainError("config mode must be 'full'")
    if batch.n_boundary < 1:
        raise PretrainError("boundary set must not be empty")
    if batch.n_collocation < 1:
        raise PretrainError("collocation set must not be empty")
    if batch.collocation_K is None:
        raise PretrainError("collocation load factors are required for the full model")

    Zb = scaler.scale_inputs(batch.boundary_X)
    y = scaler.normalise_output(batch.boundary_u)
    Zf = scaler.scale_inputs(batch.collocation_X)

    t_lo, t_hi = time_range or batch.time_range or (
        float(np.min(batch.collocation_X[:, COL_T])),
        float(np.max(batch.collocation_X[:, COL_T])),
    )
    Zall = np.vstack([Zb, Zf])
    rng_t = float(Zall[:, COL_T].max() - Zall[:, COL_T].min())
    rng_x = float(Zall[:, COL_X].max() - Zall[:, COL_X].min())
    eps_t = config.epsilon_t if config.epsilon_t is not None else max(0.01 * rng_t, 1e-2)
    eps_x = config.epsilon_x if config.epsilon_x is not None else max(0.01 * rng_x, 1e-2)
    sig_t = scaler.input_std[COL_T]
    sig_x = scaler.input_std[COL_X]
    step_t = eps_t * sig_t   # physical seconds
    step_x = eps_x * sig_x   # physical meters

    # Four evaluation rows per collocation point, in scaled input units.
    eval_rows = []
    for j in range(batch.n_collocation):
        Xj = batch.collocation_X[j]
        t_shift = Xj[COL_T] + step_t
        if not (t_lo - 1e-9 <= t_shift <= t_hi + 1e-9):
            raise PretrainError(
                f"time shift {t_shift:.6g}s leaves the scenario range [{t_lo:.6g}, {t_hi:.6g}]"
            )
        base = Zf[j].copy()
        row_t = base.copy()
        row_t[COL_T] += eps_t
        K = float(batch.collocation_K[j])
        rows_x = []
        for sgn in (-1.0, +1.0):
            row = base.copy()
            row[COL_X] += sgn * eps_x
            pk = load_loss(K, Xj[COL_X] + sgn * step_x, phys.nu)
            row[COL_PK] = (pk - scaler.input_mean[COL_PK]) / scaler.input_std[COL_PK]
            rows_x.append(row)
        eval_rows.append((base, row_t, rows_x[0], rows_x[1]))

    all_rows = np.vstack([Zb] + [np.vstack(rows) for rows in eval_rows])
    M = config.big_m if config.big_m is not None else required_big_m(all_rows, config.weight_box)
    if M < required_big_m(all_rows, config.weight_box) - 1e-9:
        raise PretrainError("big_m too small for the dataset")
    config = replace(config, big_m=M, epsilon_t=eps_t, epsilon_x=eps_x)

    model = MilpModel(f"pretrain_full_{config.n_hidden}n")
    W1, b1, b2 = _declare_weights(model, config)
    encodings: list[SatEncoding] = []
    data_err, res_err = [], []
    objective = LinExpr()

    Nu = batch.n_boundary
    for i in range(Nu):
        sats = _encode_layer(model, config, W1, b1, Zb[i], M, f"u{i}", encodings)
        y_hat = _output_expr(config, sats, b2)
        e = encode_abs(model, y_hat - float(y[i]), f"e_u{i}")
        data_err.append(f"e_u{i}")
        objective = objective + (config.lambda_u / Nu) * e

    span = scaler.output_span
    omin = scaler.output_min
    c_eff = phys.rho * phys.c_p if phys.include_density_in_residual else phys.c_p
    rc = phys.volumetric_heat_capacity
    Nf = batch.n_collocation
    for j, (base, row_t, row_xm, row_xp) in enumerate(eval_rows):
        tags = ("c", "t", "xm", "xp")
        outs = {}
        for tag, row in zip(tags, (base, row_t, row_xm, row_xp)):
            sats = _encode_layer(model, config, W1, b1, row, M, f"f{j}{tag}", encodings)
            outs[tag] = omin + span * _output_expr(config, sats, b2)
        u_t = (outs["t"] - outs["c"]) * (1.0 / step_t)
        u_xx = (outs["xp"] - 2.0 * outs["c"] + outs["xm"]) * (1.0 / step_x**2)
        Xj = batch.collocation_X[j]
        f_expr = (
            c_eff * u_t
            - phys.k * u_xx
            - (phys.P0 + float(Xj[COL_PK]) - phys.h * (outs["c"] - float(Xj[COL_TA])))
        )
        e = encode_abs(model, f_expr * (1.0 / rc), f"e_f{j}")
        res_err.append(f"e_f{j}")
        objective = objective + (config.lambda_f / Nf) * e

    model.set_objective(objective)
    pm = PretrainModel(model, config, scaler, Zb, y, encodings, data_err, res_err)
    _attach_completion_hint(pm)
    return pm


@dataclass
class PretrainResult:
    """Decoded network weights plus solver metadata."""

    params: NetworkParams
    objective: float
    data_term: float
    recomputed_mae: float
    solution: MilpSolution


def decode_solution(pm: PretrainModel, solution: MilpSolution) -> PretrainResult:
    """Read the weights out of a solution and cross-check the data term.

    For Optimal solves with a positive data weight, the decoded sat-network
    MAE on the pre-training points must match the model's data-term value to
    1e-6; a mismatch means encoder and network disagree and raises.
    """
    if solution.status == milp.INFEASIBLE:
        raise PretrainError("cannot decode an infeasible solution")
    values = solution.values
    w1_names, b1_names, b2_name = pm.weight_names()
    try:
        W1 = np.array([[values[n] for n in row] for row in w1_names])
        b1 = np.array([values[n] for n in b1_names])
        b2 = values[b2_name]
    except KeyError as exc:
        raise MissingVariable(str(exc)) from None
    params = NetworkParams(W1=W1, b1=b1, W2=pm.config.w2_fixed.copy(), b2=b2)

    y_hat = network.forward_sat(params, pm.boundary_Z, scaler=None)
    recomputed = float(np.mean(np.abs(np.atleast_1d(y_hat) - pm.boundary_y)))
    data_term = float(np.mean([values[n] for n in pm.data_error_vars]))
    lam_u = 1.0 if pm.config.mode == MODE_BOUNDARY else pm.config.lambda_u
    if solution.status == milp.OPTIMAL and lam_u > 0.0:
        if abs(recomputed - data_term) > 1e-6:
            raise DecodeError(
                f"decoded MAE {recomputed:.9g} != model data term {data_term:.9g}"
            )
    return PretrainResult(
        params=params,
        objective=solution.objective,
        data_term=data_term,
        recomputed_mae=recomputed,
        solution=solution,
    )
