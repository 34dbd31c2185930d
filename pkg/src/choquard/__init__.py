"""Mass-constrained minimizers of the nonlocal Choquard energy.

Spectral grids and free-space kernel application live in grid/spectral;
functionals holds the energy pieces and variational-identity residuals;
solvers provides the groundstate fixed point and the constrained descent
flow; experiments runs regime probes and the near-critical concentration
sweep; verify cross-checks everything against independent oracles.
"""

from .chqf import ChqfError, read_chqf, write_chqf
from .functionals import (
    EnergyBreakdown,
    dilate,
    energy,
    extremal_profile,
    gradient,
    hls_ratio,
    normalize_mass,
    pohozaev_residual,
    resample_affine,
    resample_scaled,
    virial_residual_critical,
    wp_ratio,
)
from .grid import Field, Grid, boundary_mass, inner, lp_norm
from .io import (
    ConfigError,
    RunConfig,
    config_hash,
    load_config,
    parse_config,
    write_config,
    write_records,
)
from .params import ChoquardParams, ParamsError, Regime, riesz_constant
from .potentials import CombineRule, PotentialSpec, Well, evaluate_potential, moment
from .solvers import (
    FlowOptions,
    PetviashviliOptions,
    SolveReport,
    SolveStatus,
    critical_mass,
    gaussian_field,
    minimize_on_sphere,
    multiplier_sign_check,
    petviashvili_solve,
    rescale_unit_to_Qp,
)
from .spectral import (
    RieszOptions,
    RieszScheme,
    SpectralWorkspace,
    inverse_helmholtz,
    kinetic_energy,
    laplacian_apply,
    riesz_convolve,
)

__version__ = "0.1.0"
