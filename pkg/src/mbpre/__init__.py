"""Multitype branching processes in i.i.d. random environment.

Exact truncated-chain oracles, Monte Carlo simulators, the growth spectrum of
random matrix products and the size-biased Q-process, for models with finitely
many environment states and finite-support offspring laws.
"""

from .envmodel import (
    ConditionsConfig,
    EnvModel,
    EnvState,
    OffspringLaw,
    annealed_mean,
    check_conditions,
    hessians,
    mean_matrix,
    pgf_eval,
    sample_state,
    t_stat,
)
from .errors import (
    ConvergenceError,
    DegenerateError,
    DomainError,
    InsufficientDataError,
    MbpreError,
    ModelError,
    NumericalError,
    PopulationOverflowError,
    ResourceError,
    TruncationError,
)
from .fixtures import f1, f2, f3
from .lyapunov import (
    ThetaSpectrum,
    TiltedSampler,
    classify,
    estimate_Y,
    lambda_prime_at_one,
    lambda_r_theta,
    survival_tilted,
    theta_spectrum,
    tilted_step,
)
from .modelfile import dump_model, load_model, parse_model
from .oracle import (
    TruncatedChain,
    YaglomData,
    build_chain,
    eqy_residual,
    phi_estimate,
    survival_exact,
    theorem1_report,
    yaglom_exact,
)
from .qprocess import QKernel, build_qkernel, corollary_checks, qprocess_simulate, qstat
from .simulate import pgf_iterate, run, step_population, survival_mc, yaglom_mc
from .spectral import SpectralData, op_norm, perron_eig, project_col, project_row

__version__ = "0.1.0"
