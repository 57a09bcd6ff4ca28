"""Transmission scheduling that minimizes state-dependent actuation-error
costs for remotely tracked Markov sources under a frequency budget."""

from .scenario import (
    ChannelSpec,
    Scenario,
    SourceSpec,
    load_scenario,
    reference_example_scenario,
    save_scenario,
    validate_scenario,
)
from .mdp_core import Kernel, StateSpace, build_kernel, enumerate_states, kernel_for
from .chain_analysis import (
    DeterministicPolicy,
    PolicyEvaluation,
    RandomizedPolicy,
    SAPolicyParams,
    evaluate_policy,
    sa_policy,
)
from .rvi import SolveResult, solve_lmdp
from .lagrange_search import (
    MixturePolicy,
    SearchTrace,
    bisection_search,
    cmax_upper_bound,
    intersection_search,
    mix_policies,
)
from .qlearn import KernelSampler, LearnConfig, learn_lmdp
from .dpp import DPPState, dpp_decide, expected_one_step_cae, queue_update
from .sim import DppPolicy, SimConfig, SimMetrics, run, run_mixture_expected

__version__ = "0.1.0"

__all__ = [
    "ChannelSpec",
    "Scenario",
    "SourceSpec",
    "load_scenario",
    "reference_example_scenario",
    "save_scenario",
    "validate_scenario",
    "Kernel",
    "StateSpace",
    "build_kernel",
    "enumerate_states",
    "kernel_for",
    "DeterministicPolicy",
    "PolicyEvaluation",
    "RandomizedPolicy",
    "SAPolicyParams",
    "evaluate_policy",
    "sa_policy",
    "SolveResult",
    "solve_lmdp",
    "MixturePolicy",
    "SearchTrace",
    "bisection_search",
    "cmax_upper_bound",
    "intersection_search",
    "mix_policies",
    "KernelSampler",
    "LearnConfig",
    "learn_lmdp",
    "DPPState",
    "dpp_decide",
    "expected_one_step_cae",
    "queue_update",
    "DppPolicy",
    "SimConfig",
    "SimMetrics",
    "run",
    "run_mixture_expected",
]
