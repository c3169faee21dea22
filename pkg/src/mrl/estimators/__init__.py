from .density import GaussianBoundFit, GaussianKDE, ball_grid, gaussian_bound_fit, kde_density
from .interpolation import interpolation_check
from .jacobian_probe import conditional_tail, jacobian_nondegeneracy_probe, probe_quantities
from .norris import norris_diagnostic, norris_scaling_fit
from .roughness import RoughnessReport, roughness_modulus
from .smallball import confinement_images, confinement_series, smallball_estimate
from .tails import TailReport, tail_report

__all__ = [
    "GaussianBoundFit",
    "GaussianKDE",
    "RoughnessReport",
    "TailReport",
    "ball_grid",
    "conditional_tail",
    "confinement_images",
    "confinement_series",
    "gaussian_bound_fit",
    "interpolation_check",
    "jacobian_nondegeneracy_probe",
    "kde_density",
    "norris_diagnostic",
    "norris_scaling_fit",
    "probe_quantities",
    "roughness_modulus",
    "smallball_estimate",
    "tail_report",
]
