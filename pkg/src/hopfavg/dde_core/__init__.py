"""Linear delay equations: kernels, characteristic roots and spectral projection."""

from .fundamental import StableTable, integrate_dde, stable_fundamental
from .kernel import MeasureKernel, Segment, apply_kernel, char_fn, char_fn_deriv, check_span
from .roots import (
    CharacteristicRoot,
    CriticalityReport,
    critical_frequencies,
    default_search_region,
    find_roots,
    scale_to_criticality,
    verify_criticality,
    winding_number,
)
from .spectral import (
    GridProjector,
    SpectralData,
    amplitude,
    bilinear_form,
    bilinear_form_exact,
    build_adjoint_basis,
    build_spectral,
    complement_segment,
    critical_segment,
    duality_residual,
    project_coords,
    project_segment,
    rotation_matrix,
    trig_basis,
)

__all__ = [
    "CharacteristicRoot",
    "CriticalityReport",
    "GridProjector",
    "MeasureKernel",
    "Segment",
    "SpectralData",
    "StableTable",
    "amplitude",
    "apply_kernel",
    "bilinear_form",
    "bilinear_form_exact",
    "build_adjoint_basis",
    "build_spectral",
    "char_fn",
    "char_fn_deriv",
    "check_span",
    "complement_segment",
    "critical_frequencies",
    "critical_segment",
    "default_search_region",
    "duality_residual",
    "find_roots",
    "integrate_dde",
    "project_coords",
    "project_segment",
    "rotation_matrix",
    "scale_to_criticality",
    "stable_fundamental",
    "trig_basis",
    "verify_criticality",
    "winding_number",
]
