"""FFT-based homogenization with an explicitly constructed Fourier neural operator."""
__version__ = "0.1.0"

from .grid import Cell, FourierGrid, ROTATED, SPECTRAL
from .green import gamma_apply, green_displacement, von_mises
from .microstructure import MaterialTable, PhaseMap, assign_materials, gen_sphere, sphere_materials
from .relu import ContractionNet, SquareNet, calibrate_depth, measure_fidelity
from .solver import (
    ParameterSelection,
    SolverConfig,
    StiffnessField,
    effective_stiffness,
    isotropic_projection,
    select_parameters,
    solve,
)
from .tensors import IsotropicMaterial, isotropic_stiffness

