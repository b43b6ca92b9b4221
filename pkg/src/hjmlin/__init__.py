"""Forward-rate models with volatility linear in the rate, driven by Levy noise."""

from .blowup import BlowupEstimate, analytic_lower_bound, estimate_nonexistence, eta_process, jensen_lower_bound
from .curve import (
    ForwardSurface,
    InitialCurve,
    PrimitiveSurface,
    blowup_boundary,
    bond_price,
    forward_surface,
    gaussian_original,
    primitive_surface,
    to_original,
)
from .errors import ETH, BlowupError, DomainError, HJMError, PositivityError, is_eth
from .exponent import grad_laplace_exponent, hjm_drift, laplace_exponent
from .flow import (
    FlowPath,
    alpha_flow,
    flow_derivative,
    gaussian_flow,
    jump_martingale_flow,
    poisson_flow,
    solve_flow,
)
from .noise import (
    AlphaSubordinator,
    AtomicMeasure,
    Gaussian,
    JumpMartingale,
    LevyPath,
    Poisson,
    PowerLawMeasure,
    StandardWiener,
    simulate_path,
    stochastic_exponential_alpha,
    stochastic_exponential_gaussian,
    stochastic_exponential_jump,
)
from .volatility import VolatilityFn

__version__ = "0.1.0"
