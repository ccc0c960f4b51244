"""Critical points of hyperfine transition frequencies under an applied magnetic field.

The spin Hamiltonian is H = B.M.I + I.Q.I with field B in Gauss and energies
in MHz. The package covers spin operators, tensor construction, analytic field
derivatives, the critical-point search, spectra of the two C2-related
subsites and echo-decay fitting.
"""
from .config import ConfigError, SystemConfig, load_config, parse_config
from .decoherence import DecayModel, evaluate, fit, generate, rate_from_tm, tm_from_rate
from .derivatives import (DegenerateLevelError, LevelModel, sensitivity, zeeman_gradient,
                          zeeman_hessian)
from .hamiltonian import (TransitionDescriptor, adiabatic_labels, build_hamiltonian, energies,
                          level_map, resolve_transition, transition_frequency)
from .search import Classification, CriticalPoint, SearchBox, find_all, refine_critical_point
from .spectrum import lines_at, spectrum_vs_field
from .spin_algebra import SpinSystem, eigensystem, make_spin_system
from .tensors import InteractionTensors, SiteLabel, build_tensors, euler_rotation, subsite_transform

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "SystemConfig", "load_config", "parse_config",
    "DecayModel", "evaluate", "fit", "generate", "rate_from_tm", "tm_from_rate",
    "DegenerateLevelError", "LevelModel", "sensitivity", "zeeman_gradient", "zeeman_hessian",
    "TransitionDescriptor", "adiabatic_labels", "build_hamiltonian", "energies", "level_map",
    "resolve_transition", "transition_frequency",
    "Classification", "CriticalPoint", "SearchBox", "find_all", "refine_critical_point",
    "lines_at", "spectrum_vs_field",
    "SpinSystem", "eigensystem", "make_spin_system",
    "InteractionTensors", "SiteLabel", "build_tensors", "euler_rotation", "subsite_transform",
]
