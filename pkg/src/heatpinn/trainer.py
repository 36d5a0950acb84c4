"""Two-stage training: full-batch ADAM followed by L-BFGS.

Initialisation is random (Glorot), or taken from a boundary / full
pre-training solve with the output weights frozen during pre-training only.
All of the parameters train afterwards.
"""

import time
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import milp, network, pretrain
from .heat_model import PhysicalParams
from .losses import Batch, LossSpec, composite_loss, composite_loss_and_grad
from .network import NetworkParams, Scaler

MODE_VANILLA = "vanilla"
MODE_BOUNDARY = "boundary"
MODE_FULL = "full"
MODES = (MODE_VANILLA, MODE_BOUNDARY, MODE_FULL)


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    mode: str = MODE_VANILLA
    n_hidden: int = 32
    adam_epochs: int = 5000
    adam_lr: float = 1e-2
    lbfgs_max_iters: int = 500
    lbfgs_history: int = 10
    lbfgs_grad_tol: float = 1e-9
    seed: int = 0
    loss_spec: LossSpec = field(default_factory=LossSpec)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.adam_lr <= 0.0:
            raise ValueError("adam_lr must be positive")
        if self.lbfgs_history < 1:
            raise ValueError("lbfgs_history must be >= 1")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @staticmethod
    def fresh(n: int) -> "AdamState":
        return AdamState(np.zeros(n), np.zeros(n), 0)


def adam_step(x: np.ndarray, grad: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected ADAM update; returns (new_x, new_state)."""
    if x.shape != grad.shape:
        raise ValueError("parameter and gradient shapes differ")
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    x_new = x - lr * m_hat / (np.sqrt(v_hat) + eps)
    return x_new, AdamState(m, v, step)


GRAD_TOL = "GradTol"
MAX_ITERS = "MaxIters"
LINE_SEARCH_FAIL = "LineSearchFail"


@dataclass
class LbfgsResult:
    x: np.ndarray
    iterations: int
    status: str


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic through (a,fa,ga), (b,fb,gb); None if ill-posed."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0.0:
        return None
    d2 = np.sqrt(disc)
    if a > b:
        d2 = -d2
    denom = gb - ga + 2.0 * d2
    if denom == 0.0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def _strong_wolfe(phi, f0, g0, alpha0, c1=1e-4, c2=0.9, max_evals=25):
    """Strong-Wolfe line search (bracket then zoom with cubic steps).

    ``phi(alpha)`` returns (f, directional derivative, payload).  Returns
    (alpha, payload) or (None, None) on failure.
    """
    a_prev, f_prev, g_prev = 0.0, f0, g0
    alpha = alpha0
    payload_prev = None
    lo = hi = None
    for i in range(max_evals):
        f, g, payload = phi(alpha)
        if f > f0 + c1 * alpha * g0 or (i > 0 and f >= f_prev):
            lo = (a_prev, f_prev, g_prev, payload_prev)
            hi = (alpha, f, g, payload)
            break
        if abs(g) <= -c2 * g0:
            return alpha, payload
        if g >= 0.0:
            lo = (alpha, f, g, payload)
            hi = (a_prev, f_prev, g_prev, payload_prev)
            break
        a_prev, f_prev, g_prev, payload_prev = alpha, f, g, payload
        alpha = 2.0 * alpha
    else:
        return None, None

    for _ in range(max_evals):
        a_lo, f_lo, g_lo, p_lo = lo
        a_hi, f_hi, g_hi, _ = hi
        if abs(a_hi - a_lo) < 1e-16:
            break
        trial = _cubic_min(a_lo, f_lo, g_lo, a_hi, f_hi, g_hi)
        left, right = min(a_lo, a_hi), max(a_lo, a_hi)
        width = right - left
        if trial is None or not (left + 0.1 * width <= trial <= right - 0.1 * width):
            trial = 0.5 * (a_lo + a_hi)
        f, g, payload = phi(trial)
        if f > f0 + c1 * trial * g0 or f >= f_lo:
            hi = (trial, f, g, payload)
        else:
            if abs(g) <= -c2 * g0:
                return trial, payload
            if g * (a_hi - a_lo) >= 0.0:
                hi = lo
            lo = (trial, f, g, payload)
    a_lo, f_lo, _, p_lo = lo
    if p_lo is not None and f_lo < f0:
        return a_lo, p_lo  # acceptable decrease even without curvature
    return None, None


def lbfgs_minimize(x0: np.ndarray, fun_grad, max_iters: int, history: int = 10,
                   grad_tol: float = 1e-9, callback=None) -> LbfgsResult:
    """Limited-memory BFGS with two-loop recursion and strong Wolfe steps."""
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun_grad(x)
    if np.max(np.abs(g)) <= grad_tol:
        return LbfgsResult(x, 0, GRAD_TOL)
    s_hist: deque = deque(maxlen=history)
    y_hist: deque = deque(maxlen=history)
    rho_hist: deque = deque(maxlen=history)

    for it in range(1, max_iters + 1):
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if s_hist:
            s, y = s_hist[-1], y_hist[-1]
            q *= (s @ y) / (y @ y)
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q
        gtd = g @ d
        if gtd >= 0.0:  # not a descent direction: restart from steepest descent
            d = -g
            gtd = g @ d
            s_hist.clear(); y_hist.clear(); rho_hist.clear()

        def phi(alpha, _d=d):
            xt = x + alpha * _d
            ft, gt = fun_grad(xt)
            return ft, gt @ _d, (xt, ft, gt)

        alpha0 = min(1.0, 1.0 / (np.sum(np.abs(g)) + 1e-12)) if not s_hist else 1.0
        alpha, payload = _strong_wolfe(phi, f, gtd, alpha0)
        if alpha is None:
            return LbfgsResult(x, it, LINE_SEARCH_FAIL)
        x_new, f_new, g_new = payload
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
        x, f, g = x_new, f_new, g_new
        if callback is not None:
            callback(it, x, f, g)
        if np.max(np.abs(g)) <= grad_tol:
            return LbfgsResult(x, it, GRAD_TOL)
    return LbfgsResult(x, max_iters, MAX_ITERS)


@dataclass
class TraceRecord:
    epoch: int
    total: float
    data_term: float
    residual_term: float
    elapsed_s: float


@dataclass
class TrainingTrace:
    records: list
    final_params: NetworkParams
    final_status: str
    pretrain_seconds: float | None = None
    pretrain_objective: float | None = None
    pretrain_solution: milp.MilpSolution | None = None

    @property
    def final_losses(self) -> TraceRecord:
        return self.records[-1]


def initialize_params(mode: str, seed: int, n_hidden: int, batch: Batch,
                      scaler: Scaler, phys: PhysicalParams,
                      pretrain_config: pretrain.PretrainConfig | None = None,
                      budget: milp.SolveBudget | None = None):
    """Initial weights per mode; returns (params, pretrain metadata or None)."""
    base = network.glorot_init(seed, n_hidden)
    if mode == MODE_VANILLA:
        return base, None
    cfg = pretrain_config or pretrain.PretrainConfig(mode=mode, w2_fixed=base.W2)
    if cfg.w2_fixed.size != n_hidden:
        cfg = replace(cfg, w2_fixed=base.W2)
    if cfg.mode != mode:
        raise PipelineError(f"pretrain config mode {cfg.mode!r} != pipeline mode {mode!r}")
    t0 = time.perf_counter()
    if mode == MODE_BOUNDARY:
        pm = pretrain.build_boundary_model(batch, scaler, cfg)
    else:
        pm = pretrain.build_full_model(batch, scaler, phys, cfg)
    solution = milp.solve_milp(pm.milp, budget)
    elapsed = time.perf_counter() - t0
    if solution.status == milp.INFEASIBLE:
        raise PipelineError("pre-training MILP is infeasible")
    result = pretrain.decode_solution(pm, solution)
    return result.params, (elapsed, result)


def train_pipeline(batch: Batch, scaler: Scaler, phys: PhysicalParams,
                   config: TrainConfig,
                   pretrain_config: pretrain.PretrainConfig | None = None,
                   pretrain_budget: milp.SolveBudget | None = None,
                   initial_params: NetworkParams | None = None) -> TrainingTrace:
    """Initialise, run ADAM for ``adam_epochs``, then L-BFGS; trace losses.

    The trace has one record for the initial loss and one per optimizer step
    (ADAM epochs first, L-BFGS iterations after, shared epoch numbering).
    Elapsed seconds cover optimizer work only.
    """
    if initial_params is not None:
        params0, meta = initial_params, None
    else:
        params0, meta = initialize_params(
            config.mode, config.seed, config.n_hidden, batch, scaler, phys,
            pretrain_config, pretrain_budget,
        )
    spec = config.loss_spec
    theta = network.params_to_vector(params0)
    n_hidden = params0.n_hidden
    records: list[TraceRecord] = []
    start = time.perf_counter()

    def losses_at(vec):
        p = network.vector_to_params(vec, n_hidden)
        return composite_loss(p, scaler, phys, spec, batch)

    def fun_grad(vec):
        p = network.vector_to_params(vec, n_hidden)
        total, _, _, grad = composite_loss_and_grad(p, scaler, phys, spec, batch)
        return total, grad

    state = AdamState.fresh(theta.size)
    for epoch in range(config.adam_epochs + 1):
        p = network.vector_to_params(theta, n_hidden)
        total, du, df = composite_loss(p, scaler, phys, spec, batch)
        records.append(TraceRecord(epoch, total, du, df, time.perf_counter() - start))
        if epoch == config.adam_epochs:
            break
        _, _, _, grad = composite_loss_and_grad(p, scaler, phys, spec, batch)
        theta, state = adam_step(theta, grad, state, config.adam_lr)

    status = "adam" if config.adam_epochs else "initial"
    if config.lbfgs_max_iters > 0:
        offset = config.adam_epochs

        def on_iter(k, vec, fval, gvec):
            _, du_, df_ = losses_at(vec)
            records.append(
                TraceRecord(offset + k, fval, du_, df_, time.perf_counter() - start)
            )

        res = lbfgs_minimize(
            theta, fun_grad, config.lbfgs_max_iters,
            history=config.lbfgs_history, grad_tol=config.lbfgs_grad_tol,
            callback=on_iter,
        )
        theta = res.x
        status = res.status

    final = network.vector_to_params(theta, n_hidden)
    trace = TrainingTrace(records, final, status)
    if meta is not None:
        elapsed, result = meta
        trace.pretrain_seconds = elapsed
        trace.pretrain_objective = result.objective
        trace.pretrain_solution = result.solution
    return trace
