"""Physics-informed neural networks for 1-D transformer heat diffusion,
with MILP-based weight pre-training and a finite-difference reference solver.
"""

from . import heat_model, losses, milp, network, pretrain, reference_solver, trainer

__version__ = "0.1.0"

__all__ = [
    "heat_model",
    "losses",
    "milp",
    "network",
    "pretrain",
    "reference_solver",
    "trainer",
    "__version__",
]
