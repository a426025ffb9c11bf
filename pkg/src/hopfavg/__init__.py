"""Stochastic averaging near a Hopf bifurcation in delay equations.

Subpackages and modules
-----------------------
dde_core
    Kernels, characteristic roots, adjoint basis, spectral projection.
sdde_sim
    Seeded simulation of the full noisy delay equation.
averaging
    Coefficients of the one-dimensional amplitude SDE.
reduced_sde
    Simulation of the amplitude SDE.
stats
    ECDFs, KS distances, exit-time laws, Lyapunov estimates.
cli
    The ``hopfavg`` command.
"""

from .averaging import (
    AveragedModel,
    average_additive,
    average_multiplicative,
    check_gq_condition,
    drift_q1,
    drift_q2,
    lyapunov_avg,
    seam_theta_infimum,
)
from .config import ExperimentConfig, load_config, parse_config
from .dde_core import MeasureKernel, Segment, SpectralData, build_spectral
from .perturbation import (
    Additive,
    DelayPolynomial,
    LinearMultiplicative,
    PerturbationSpec,
    delay_monomial_perturbation,
)
from .reduced_sde import ReducedTrajectory, run_reduced_ensemble, simulate_reduced
from .sdde_sim import (
    Ensemble,
    TrajectoryRecord,
    initial_segment,
    run_ensemble,
    simulate_path,
    simulate_trajectory,
)
from .stats import ecdf, exit_time_cdf, ks_distance, lyapunov_estimate

__version__ = "0.1.0"
