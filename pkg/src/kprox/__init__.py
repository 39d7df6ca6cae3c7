"""Probability-weighted particle propagation for stochastic oscillator networks.

The package evolves the joint state density of networked second-order
phase oscillators (power-system swing dynamics) by moving a particle
cloud with Euler-Maruyama and updating each particle's density value
through an entropic proximal fixed point, instead of estimating the
density after the fact from bare samples.
"""

from .casefile import (
    parse_dynamic_params,
    parse_matpower_case,
    parse_network_json,
    sample_table1_params,
)
from .distributions import InitialPdf, sample_initial, sample_von_mises, von_mises_pdf
from .dynamics import (
    Ensemble,
    PropagateResult,
    StepInfo,
    em_step_original,
    em_step_transformed,
    propagate,
    to_original,
    to_transformed,
)
from .kernels import backend
from .network import (
    ReducedNetwork,
    apply_line_outage,
    kron_reduce,
    load_reduced_network,
    network_from_draws,
    reduce_case,
    save_reduced_network,
    smib_network,
)
from .prox import ProxConfig, ProxReport, build_cost_matrix, ground_cost, prox_step
from .transform import TransformSpec, check_einstein, make_transform

__version__ = "0.1.0"

__all__ = [
    "Ensemble",
    "InitialPdf",
    "PropagateResult",
    "ProxConfig",
    "ProxReport",
    "ReducedNetwork",
    "StepInfo",
    "TransformSpec",
    "__version__",
    "apply_line_outage",
    "backend",
    "build_cost_matrix",
    "check_einstein",
    "em_step_original",
    "em_step_transformed",
    "ground_cost",
    "kron_reduce",
    "load_reduced_network",
    "make_transform",
    "network_from_draws",
    "parse_dynamic_params",
    "parse_matpower_case",
    "parse_network_json",
    "propagate",
    "prox_step",
    "reduce_case",
    "sample_initial",
    "sample_table1_params",
    "sample_von_mises",
    "save_reduced_network",
    "smib_network",
    "to_original",
    "to_transformed",
    "von_mises_pdf",
]
