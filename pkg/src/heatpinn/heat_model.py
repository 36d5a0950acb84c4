"""Physical model of 1-D heat diffusion inside a power transformer.

Temperatures are kelvin, positions meters, time seconds.  The spatial axis is
normalised so the winding occupies x in [0, 1] by default.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PhysicalParams:
    """Material constants and loss coefficients of the transformer model.

    Defaults are the mineral-oil transformer values used throughout the
    experiments.  ``include_density_in_residual`` switches the residual's
    time-derivative coefficient from c_p to rho*c_p (the governing PDE always
    carries rho*c_p; the residual used for training may drop rho).
    """

    k: float = 50.0          # thermal conductivity [W/(m K)]
    rho: float = 900.0       # density [kg/m^3]
    c_p: float = 2000.0      # specific heat capacity [J/(kg K)]
    h: float = 1000.0        # convective heat transfer coefficient [W/(m^2 K)]
    P0: float = 15000.0      # no-load loss [W]
    nu: float = 83000.0      # rated load loss [W]
    include_density_in_residual: bool = False

    def __post_init__(self) -> None:
        # k, rho, c_p appear in denominators; the loss terms may be zeroed
        # for degenerate test configurations.
        for name in ("k", "rho", "c_p"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        for name in ("h", "P0", "nu"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def volumetric_heat_capacity(self) -> float:
        return self.rho * self.c_p


@dataclass(frozen=True)
class Domain:
    """Rectangular space-time domain [x0, x_end] x [t0, t_end]."""

    x0: float = 0.0
    x_end: float = 1.0
    t0: float = 0.0
    t_end: float = 360000.0  # 100 hours

    def __post_init__(self) -> None:
        if not self.x0 < self.x_end:
            raise ValueError("require x0 < x_end")
        if not self.t0 < self.t_end:
            raise ValueError("require t0 < t_end")

    @property
    def length(self) -> float:
        return self.x_end - self.x0

    @property
    def duration(self) -> float:
        return self.t_end - self.t0


def load_loss(K, x, nu):
    """Load loss P_K = nu * K^2 * (0.5*sin(3*pi*x) + 0.5) in watts.

    Periodic in x with period 2/3 and nonnegative for every input.
    """
    return nu * np.square(K) * (0.5 * np.sin(3.0 * np.pi * np.asarray(x)) + 0.5)


def source(u, x, t, T_a, K, params: PhysicalParams):
    """Heat source q = P0 + P_K(x,t) - h*(u - T_a) in watts.

    ``t`` only enters through the sampled K(t) and T_a(t) values, which the
    caller supplies directly.
    """
    del t
    return params.P0 + load_loss(K, x, params.nu) - params.h * (np.asarray(u) - T_a)


def residual(u_t, u_xx, u, T_a, P_K, params: PhysicalParams):
    """PDE residual f = c*u_t - k*u_xx - (P0 + P_K - h*(u - T_a)).

    The time-derivative coefficient c is c_p, or rho*c_p when
    ``params.include_density_in_residual`` is set.
    """
    c = params.rho * params.c_p if params.include_density_in_residual else params.c_p
    return (
        c * np.asarray(u_t)
        - params.k * np.asarray(u_xx)
        - (params.P0 + np.asarray(P_K) - params.h * (np.asarray(u) - T_a))
    )
