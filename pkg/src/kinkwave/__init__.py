"""Distorted Fourier analysis and kink dynamics for 1D Klein-Gordon equations."""

from .numerics import (
    RealGrid, FreqGrid, TridiagonalOperator,
    make_grids, real_grid, freq_grid, quadrature, richardson,
    integrate_second_order_ode, schrodinger_tridiagonal,
    tridiag_eigenvalues_below, tridiag_eigenpairs_below,
)
from .models import (
    Potential, KinkModel, SolitonModel,
    poschl_teller, gaussian_bump, flat_potential,
    phi4_model, sg_model, dsg_model, nlkg_model, kink_solve,
    resolve, potential_of,
)
from .jost import (
    JostTables, ScatteringData, Classification, LowEnergyExpansion,
    compute_jost, volterra_zero_energy, scattering_coefficients,
    classify_zero_energy, low_energy_expansion, write_scattering_csv,
    GENERIC, EXCEPTIONAL, VERY_EXCEPTIONAL,
)
from .spectrum import (
    SpectralReport, DarbouxData, DarbouxReport,
    discrete_spectrum, internal_mode_scan, darboux_check,
)
from .dft import (
    DftPlan, PsiDecomposition, MultiplierOperator, WaveOperator,
    BoundStatePresentError, AsymptoticRegimeError, CacheMismatchError,
    build_plan, build_flat_plan, forward, inverse, profile_zero_limits,
    multiplier, wave_operator, psi_decompose, bump_kernel,
    linear_propagate, stationary_phase_profile, save_plan, load_plan,
    plan_cache_key,
)
from .evolve import (
    ComplexState, EvolveConfig, ProfileSeries, DecayRecord, Snapshot,
    RunResult, FlatRun, BlowUpError, InconsistentStateError, EvolveDomainError,
    to_complex, from_complex, step, energy, continuous_projection,
    evolve_perturbation, measure_decay, flat_evolve, save_run,
)
from .normalform import (
    PhiKernel, NormalFormPlan, PhaseFloorError,
    lp_cutoff, build_phi_kernel, decomposition_residual,
    build_normal_form_plan, delta_part, pv_part, pv_support_count,
    normal_form_T, renormalized_profile, d_sensitivity,
)
from .scattering import (
    SMatrix, AsymState, ModScatRecord, ModScatFit,
    DataQualityError, WindowError,
    s_matrix, flat_s_matrix, nearest_unitary, asymptotic_hamiltonian, asymptotic_rhs,
    integrate_asymptotic, modified_profile, fit_modified_scattering,
)

__version__ = "0.1.0"
