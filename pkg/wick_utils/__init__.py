from .appell import (
    appell_closed_form,
    appell_from_generating,
    appell_polynomial,
    appell_recursive,
    change_of_chaos_expand,
    exp_wick_coefficient,
    product_formula_expand,
    reverse_product_expand,
    to_appell_basis,
    to_monomial_basis,
    truncated_exp_wick,
    wick_product,
    wick_product_all,
)
from .chaos2 import (
    Chaos2Kernel,
    chaos2_change_of_chaos,
    contract_diagram,
    joint_cumulant_trace,
    trace_product,
)
from .combinatorics import (
    Diagram,
    Multiset,
    bell_number,
    enumerate_diagrams,
    enumerate_set_partitions,
    multiplicity_coefficient,
    stirling2,
    touchard,
)
from .cumulants import (
    AppellImageModel,
    CentredModel,
    CumulantModel,
    DriftModel,
    FBMModel,
    GaussianModel,
    GaussianProcessModel,
    KernelFamilyModel,
    LinearTransformModel,
    PoissonModel,
    RosenblattModel,
    SecondChaosModel,
    ShiftedProcessModel,
    TableModel,
    TimeSliceModel,
    UnivariateModel,
    Variable,
    chi_square_model,
    cumulant_from_moments,
    ekw_identity,
    moment,
)
from .debug import WickDebugger, diagnose_model, enable_debug_mode, explain_wick_error
from .errors import (
    BasisMismatchError,
    ConfigurationError,
    ConvergenceError,
    GridMismatchError,
    ModelError,
    SlotCapError,
    UnknownExperimentError,
    WellDefinednessError,
    WickError,
)
from .integrals import (
    SamplePath,
    ito_correction,
    ito_residual,
    ito_stratonovich_correction,
    mean_drift_integral,
    prepare_wick_sum,
    rosenblatt_ito_correction,
    verify_scalar_identities,
    wick_riemann_sum,
    young_integral,
)
from .polynomial import WickPolynomial
from .rosenblatt import (
    RosenblattSpec,
    beta_identity_check,
    rosenblatt_cumulant,
    rosenblatt_joint_cumulant,
    rosenblatt_kernel_discretize,
    rosenblatt_kernel_family,
)
from .simulate import (
    EXPERIMENTS,
    ExperimentReport,
    GaussianBase,
    chaos2_path_sample,
    chaos2_paths,
    fbm_paths,
    fbm_sample,
    monte_carlo,
)
from .storage import open_kernel, open_kernels, read_json, save_kernel, save_kernels, write_json

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # Combinatorics
    "Multiset",
    "Diagram",
    "enumerate_set_partitions",
    "enumerate_diagrams",
    "multiplicity_coefficient",
    "bell_number",
    "stirling2",
    "touchard",
    # Cumulant models
    "CumulantModel",
    "Variable",
    "TableModel",
    "GaussianModel",
    "PoissonModel",
    "UnivariateModel",
    "chi_square_model",
    "SecondChaosModel",
    "GaussianProcessModel",
    "FBMModel",
    "RosenblattModel",
    "KernelFamilyModel",
    "CentredModel",
    "DriftModel",
    "LinearTransformModel",
    "ShiftedProcessModel",
    "TimeSliceModel",
    "AppellImageModel",
    "moment",
    "cumulant_from_moments",
    "ekw_identity",
    # Appell polynomials and Wick products
    "WickPolynomial",
    "appell_polynomial",
    "appell_recursive",
    "appell_closed_form",
    "appell_from_generating",
    "to_appell_basis",
    "to_monomial_basis",
    "wick_product",
    "wick_product_all",
    "product_formula_expand",
    "reverse_product_expand",
    "change_of_chaos_expand",
    "exp_wick_coefficient",
    "truncated_exp_wick",
    # Second chaos
    "Chaos2Kernel",
    "trace_product",
    "joint_cumulant_trace",
    "contract_diagram",
    "chaos2_change_of_chaos",
    "RosenblattSpec",
    "beta_identity_check",
    "rosenblatt_cumulant",
    "rosenblatt_joint_cumulant",
    "rosenblatt_kernel_discretize",
    "rosenblatt_kernel_family",
    # Integrals
    "SamplePath",
    "young_integral",
    "wick_riemann_sum",
    "prepare_wick_sum",
    "mean_drift_integral",
    "ito_stratonovich_correction",
    "ito_correction",
    "rosenblatt_ito_correction",
    "ito_residual",
    "verify_scalar_identities",
    # Simulation
    "GaussianBase",
    "fbm_sample",
    "fbm_paths",
    "chaos2_path_sample",
    "chaos2_paths",
    "monte_carlo",
    "ExperimentReport",
    "EXPERIMENTS",
    # Storage
    "save_kernel",
    "open_kernel",
    "save_kernels",
    "open_kernels",
    "read_json",
    "write_json",
    # Debug tools
    "WickDebugger",
    "diagnose_model",
    "explain_wick_error",
    "enable_debug_mode",
    # Errors
    "WickError",
    "SlotCapError",
    "WellDefinednessError",
    "BasisMismatchError",
    "GridMismatchError",
    "ConvergenceError",
    "ModelError",
    "ConfigurationError",
    "UnknownExperimentError",
]
