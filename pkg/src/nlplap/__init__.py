"""Nonlocal p-Laplacian evolution on the unit interval.

Kernel discretizations, sparse random-graph realizations, forward and
backward Euler time stepping (plus a diminishing-step scheme for p = 1),
and empirical convergence-rate studies.
"""

from .analysis import (
    RateStudyResult,
    fit_rate,
    linear_oracle_p2,
    study_graph,
    study_space,
    study_time,
    traj_error_c0l2,
    two_node_closed_form,
    two_node_extinction_time,
)
from .evolve import (
    Problem,
    SeparableSource,
    TabulatedSource,
    TimeConstantSource,
    Trajectory,
    ZeroSource,
    backward_euler,
    forward_euler,
    subgradient_p1,
)
from .graphs import GraphSample, TruncatedWeights, sample, stats, truncate
from .kernels import (
    ConstantKernel,
    ConvolutionPowerLaw,
    SeparableSmooth,
    TabulatedKernel,
    eval_kernel,
    norm_l1,
    norm_linf_q,
)
from .meshes import (
    DiscreteKernel,
    GridFunction,
    Mesh,
    inject_eval,
    matrix_norm_linf_q,
    norm_lq,
    project_function,
    project_kernel,
    uniform_mesh,
)
from .operators import (
    Coupling,
    cfl_constant,
    continuity_constant,
    coupling_from_kernel,
    energy,
    monotonicity_constant,
    plap_apply,
    psi,
    resolvent,
    resolvent_with_info,
)

__version__ = "0.1.0"

__all__ = [
    "ConstantKernel",
    "ConvolutionPowerLaw",
    "Coupling",
    "DiscreteKernel",
    "GraphSample",
    "GridFunction",
    "Mesh",
    "Problem",
    "RateStudyResult",
    "SeparableSmooth",
    "SeparableSource",
    "TabulatedKernel",
    "TabulatedSource",
    "TimeConstantSource",
    "Trajectory",
    "TruncatedWeights",
    "ZeroSource",
    "backward_euler",
    "cfl_constant",
    "continuity_constant",
    "coupling_from_kernel",
    "energy",
    "eval_kernel",
    "fit_rate",
    "forward_euler",
    "inject_eval",
    "linear_oracle_p2",
    "matrix_norm_linf_q",
    "monotonicity_constant",
    "norm_l1",
    "norm_linf_q",
    "norm_lq",
    "plap_apply",
    "project_function",
    "project_kernel",
    "psi",
    "resolvent",
    "resolvent_with_info",
    "sample",
    "stats",
    "study_graph",
    "study_space",
    "study_time",
    "subgradient_p1",
    "traj_error_c0l2",
    "truncate",
    "two_node_closed_form",
    "two_node_extinction_time",
    "uniform_mesh",
]
