"""Crank-Nicolson reference solver, synthetic scenarios, and CSV ingestion.

Replaces the external FEM reference: solves rho*c_p*u_t = k*u_xx + q on a
uniform grid with Dirichlet boundaries taken from a measurement scenario.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .heat_model import Domain, PhysicalParams, load_loss
from .losses import Batch
from .network import COL_PK, COL_T, COL_TA, COL_TO, COL_X, INPUT_DIM

SCENARIO_COLUMNS = ("time_h", "T_a", "T_o", "K")


class CsvFormatError(ValueError):
    """Malformed scenario or field CSV."""


class MissingColumn(CsvFormatError):
    def __init__(self, column: str):
        super().__init__(f"missing required column {column!r}")
        self.column = column


class NonMonotoneTime(CsvFormatError):
    def __init__(self, row: int):
        super().__init__(f"time values must be strictly increasing (row {row})")
        self.row = row


class NonNumericCell(CsvFormatError):
    def __init__(self, row: int, column: str):
        super().__init__(f"non-numeric value in column {column!r} at row {row}")
        self.row = row
        self.column = column


@dataclass
class Scenario:
    """Time series driving the PDE: ambient/top-oil temperature and load."""

    times: np.ndarray  # seconds, strictly increasing
    T_a: np.ndarray    # kelvin
    T_o: np.ndarray    # kelvin
    K: np.ndarray      # load factor, p.u.

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.T_a = np.asarray(self.T_a, dtype=float)
        self.T_o = np.asarray(self.T_o, dtype=float)
        self.K = np.asarray(self.K, dtype=float)
        n = self.times.size
        if n < 2:
            raise ValueError("scenario needs at least two samples")
        if any(s.shape != (n,) for s in (self.T_a, self.T_o, self.K)):
            raise ValueError("all scenario series must share the times length")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.K < 0.0):
            raise ValueError("load factor must be nonnegative")

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def ambient_at(self, t):
        return np.interp(t, self.times, self.T_a)

    def top_oil_at(self, t):
        return np.interp(t, self.times, self.T_o)

    def load_at(self, t):
        # Load switches are step changes: hold the previous sample.
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self.K[np.clip(idx, 0, self.K.size - 1)]


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid over a domain."""

    nx: int
    nt: int
    domain: Domain

    def __post_init__(self) -> None:
        if self.nx < 3:
            raise ValueError("nx must be >= 3")
        if self.nt < 2:
            raise ValueError("nt must be >= 2")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.domain.x0, self.domain.x_end, self.nx)

    @property
    def ts(self) -> np.ndarray:
        return np.linspace(self.domain.t0, self.domain.t_end, self.nt)

    @property
    def dx(self) -> float:
        return self.domain.length / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.domain.duration / (self.nt - 1)


@dataclass
class TemperatureField:
    """Temperatures on a grid, indexed values[x_index, t_index]."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.nx, self.grid.nt):
            raise ValueError("field shape must be (nx, nt)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")


def stability_ratio(params: PhysicalParams, grid: Grid) -> float:
    """k*dt/(rho*c_p*dx^2); the discrete maximum principle needs <= 1."""
    return params.k * grid.dt / (params.volumetric_heat_capacity * grid.dx**2)


def solve(params: PhysicalParams, scenario: Scenario, grid: Grid,
          u_init: np.ndarray | None = None, extra_source=None) -> TemperatureField:
    """Advance the heat equation with a theta=1/2 (Crank-Nicolson) scheme.

    Dirichlet boundaries come from the scenario (linear interpolation in
    time).  The -h*u part of the source is folded into the implicit matrix;
    the remaining P0 + P_K + h*T_a part uses the average of the two time
    levels.  ``extra_source(x_array, t)`` adds manufactured forcing in W.
    """
    if grid.domain.t0 < scenario.t0 - 1e-9 or grid.domain.t_end > scenario.t_end + 1e-9:
        raise ValueError("grid time range must lie within the scenario time range")

    xs, ts = grid.xs, grid.ts
    nx, nt = grid.nx, grid.nt
    dx, dt = grid.dx, grid.dt
    a = params.volumetric_heat_capacity / dt
    r = params.k / (2.0 * dx * dx)
    hh = params.h / 2.0

    T_a = scenario.ambient_at(ts)
    T_o = scenario.top_oil_at(ts)
    K = scenario.load_at(ts)

    def forcing(level: int) -> np.ndarray:
        q = params.P0 + load_loss(K[level], xs[1:-1], params.nu) + params.h * T_a[level]
        if extra_source is not None:
            q = q + extra_source(xs[1:-1], ts[level])
        return q

    u = np.empty((nx, nt))
    if u_init is None:
        u[:, 0] = np.linspace(T_a[0], T_o[0], nx)
    else:
        u_init = np.asarray(u_init, dtype=float)
        if u_init.shape != (nx,):
            raise ValueError("u_init must have length nx")
        u[:, 0] = u_init
    u[0, :] = T_a
    u[-1, :] = T_o

    if nx > 2:
        # Tridiagonal LHS is constant: (a + 2r + h/2) on the diagonal, -r off it.
        ab = np.zeros((3, nx - 2))
        ab[0, 1:] = -r
        ab[1, :] = a + 2.0 * r + hh
        ab[2, :-1] = -r
        g_prev = forcing(0)
        for n in range(nt - 1):
            un = u[1:-1, n]
            g_next = forcing(n + 1)
            rhs = (
                a * un
                + r * (u[:-2, n] - 2.0 * un + u[2:, n])
                - hh * un
                + 0.5 * (g_prev + g_next)
            )
            rhs[0] += r * u[0, n + 1]
            rhs[-1] += r * u[-1, n + 1]
            try:
                u[1:-1, n + 1] = solve_banded((1, 1), ab, rhs)
            except np.linalg.LinAlgError as exc:  # zero pivot: impossible for valid params
                raise RuntimeError("tridiagonal solve failed") from exc
            g_prev = g_next
    return TemperatureField(grid, u)


def generate_scenario(seed: int, horizon_hours: float = 100.0,
                      step_minutes: float = 15.0) -> Scenario:
    """Deterministic synthetic measurement series.

    Ambient temperature is a daily sine plus smoothed noise clipped to
    [275, 310] K; the load factor is a piecewise-constant daily pattern in
    [0.2, 1.2]; the top-oil series is read off a coarse solve next to the
    x_end boundary so it stays consistent with T_a and K.
    """
    if horizon_hours <= 0.0:
        raise ValueError("horizon_hours must be positive")
    if step_minutes <= 0.0:
        raise ValueError("step_minutes must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(horizon_hours * 60.0 / step_minutes)) + 1
    times = np.arange(n) * (step_minutes * 60.0)
    hours = times / 3600.0

    day = 24.0
    phase = rng.uniform(0.0, day)
    T_a = 288.0 + 7.0 * np.sin(2.0 * np.pi * (hours - phase) / day)
    noise = rng.normal(0.0, 1.5, size=n)
    win = max(1, int(round(2.0 * 60.0 / step_minutes)))  # ~2 h moving average
    kernel = np.ones(win) / win
    T_a = T_a + np.convolve(noise, kernel, mode="same")
    T_a = np.clip(T_a, 275.0, 310.0)

    block_h = 4.0
    template = np.array([0.45, 0.65, 1.0, 1.1, 0.85, 0.5])
    block = np.floor(hours / block_h).astype(int)
    K = template[block % template.size] + rng.uniform(-0.15, 0.15, size=block.max() + 1)[block]
    K = np.clip(K, 0.2, 1.2)

    params = PhysicalParams()
    provisional = Scenario(times, T_a, T_a.copy(), K)
    coarse = Grid(nx=12, nt=n, domain=Domain(0.0, 1.0, float(times[0]), float(times[-1])))
    field = solve(params, provisional, coarse)
    T_o = field.values[-2, :]
    return Scenario(times, T_a, T_o, K)


def save_scenario_csv(path, scenario: Scenario) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCENARIO_COLUMNS)
        for t, ta, to, k in zip(scenario.times, scenario.T_a, scenario.T_o, scenario.K):
            writer.writerow([repr(float(t) / 3600.0), repr(float(ta)),
                             repr(float(to)), repr(float(k))])


def load_scenario_csv(path) -> Scenario:
    """Parse a scenario CSV (columns time_h,T_a,T_o,K; time in hours)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty scenario file") from None
        header = [h.strip() for h in header]
        for column in SCENARIO_COLUMNS:
            if column not in header:
                raise MissingColumn(column)
        idx = {column: header.index(column) for column in SCENARIO_COLUMNS}
        rows = {column: [] for column in SCENARIO_COLUMNS}
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            for column in SCENARIO_COLUMNS:
                cell = row[idx[column]] if idx[column] < len(row) else ""
                try:
                    value = float(cell)
                except ValueError:
                    raise NonNumericCell(row_no, column) from None
                rows[column].append(value)
    times_h = np.array(rows["time_h"])
    if np.any(np.diff(times_h) <= 0.0):
        bad = int(np.argmax(np.diff(times_h) <= 0.0)) + 2
        raise NonMonotoneTime(bad)
    return Scenario(
        times=times_h * 3600.0,
        T_a=np.array(rows["T_a"]),
        T_o=np.array(rows["T_o"]),
        K=np.array(rows["K"]),
    )


def save_field_csv(path, field: TemperatureField) -> None:
    """First row: time in hours; first column: x in meters; body: kelvin."""
    ts_h = field.grid.ts / 3600.0
    xs = field.grid.xs
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_m"] + [repr(float(t)) for t in ts_h])
        for i, x in enumerate(xs):
            writer.writerow([repr(float(x))] + [repr(float(v)) for v in field.values[i]])


def load_field_csv(path) -> TemperatureField:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty field file") from None
        try:
            ts = np.array([float(c) for c in header[1:]]) * 3600.0
        except ValueError:
            raise CsvFormatError("field header must contain numeric hours") from None
        xs, body = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                xs.append(float(row[0]))
                body.append([float(c) for c in row[1:]])
            except ValueError:
                raise NonNumericCell(row_no, "field") from None
    xs = np.array(xs)
    values = np.array(body)
    if values.shape != (xs.size, ts.size):
        raise CsvFormatError("field body shape does not match header/index")
    grid = Grid(
        nx=xs.size,
        nt=ts.size,
        domain=Domain(float(xs[0]), float(xs[-1]), float(ts[0]), float(ts[-1])),
    )
    return TemperatureField(grid, values)


def input_row(scenario: Scenario, params: PhysicalParams, x: float, t: float) -> np.ndarray:
    """Network input vector [T_a, x, t, T_o, P_K] at one space-time point."""
    row = np.empty(INPUT_DIM)
    row[COL_TA] = scenario.ambient_at(t)
    row[COL_X] = x
    row[COL_T] = t
    row[COL_TO] = scenario.top_oil_at(t)
    row[COL_PK] = load_loss(float(scenario.load_at(t)), x, params.nu)
    return row


def grid_inputs(scenario: Scenario, params: PhysicalParams, grid: Grid) -> np.ndarray:
    """Input rows for every grid node, shaped (nx*nt, 5), time-major per x."""
    xs, ts = grid.xs, grid.ts
    T_a = scenario.ambient_at(ts)
    T_o = scenario.top_oil_at(ts)
    K = scenario.load_at(ts)
    X = np.empty((grid.nx, grid.nt, INPUT_DIM))
    X[:, :, COL_TA] = T_a
    X[:, :, COL_X] = xs[:, None]
    X[:, :, COL_T] = ts
    X[:, :, COL_TO] = T_o
    X[:, :, COL_PK] = load_loss(K[None, :], xs[:, None], params.nu)
    return X.reshape(-1, INPUT_DIM)


def sample_training_points(field: TemperatureField, scenario: Scenario,
                           n_boundary: int, n_collocation: int, seed: int,
                           params: PhysicalParams) -> Batch:
    """Draw boundary samples (with measured u) and interior collocation inputs.

    Boundary samples are uniform without replacement over the two boundary
    rows of the field; collocation points are uniform over the open interior
    rectangle and carry inputs only.  Deterministic per seed.
    """
    if n_boundary < 1:
        raise ValueError("n_boundary must be >= 1")
    if n_collocation < 0:
        raise ValueError("n_collocation must be >= 0")
    grid = field.grid
    total_boundary = 2 * grid.nt
    if n_boundary > total_boundary:
        raise ValueError("n_boundary exceeds available boundary grid points")
    rng = np.random.default_rng(seed)
    picks = rng.choice(total_boundary, size=n_boundary, replace=False)
    bx = np.empty((n_boundary, INPUT_DIM))
    bu = np.empty(n_boundary)
    xs, ts = grid.xs, grid.ts
    for i, pick in enumerate(picks):
        side, j = divmod(int(pick), grid.nt)
        x = xs[0] if side == 0 else xs[-1]
        bx[i] = input_row(scenario, params, float(x), float(ts[j]))
        bu[i] = field.values[0 if side == 0 else -1, j]

    cx = np.zeros((n_collocation, INPUT_DIM))
    ck = np.zeros(n_collocation)
    if n_collocation:
        x_rand = rng.uniform(grid.domain.x0, grid.domain.x_end, size=n_collocation)
        t_rand = rng.uniform(grid.domain.t0, grid.domain.t_end, size=n_collocation)
        for j in range(n_collocation):
            cx[j] = input_row(scenario, params, float(x_rand[j]), float(t_rand[j]))
            ck[j] = float(scenario.load_at(t_rand[j]))
    return Batch(bx, bu, cx, ck, time_range=(scenario.t0, scenario.t_end))
