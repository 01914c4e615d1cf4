"""Monte Carlo annealing lab for 3D Ising spin glasses.

Classical annealing (Metropolis), simulated quantum annealing by path-integral
Monte Carlo, exact oracles for small systems, adaptive schedules and
time-to-solution benchmarking.
"""

from .lattice import (LatticeSpec, SpinGlassInstance, energy, generate_ferromagnet, generate_spin_glass,
                      load_instance, save_instance, single_spin)
from .classical import CaRunParams, ca_anneal, ca_equilibrium_measure, search_ground_state
from .pimc import PimcParams, sqa_anneal, sqa_equilibrium_measure
from .schedules import (Schedule, build_adaptive_schedule, exponential_schedule, hybrid_schedule,
                        linear_schedule)
from .benchmark import CampaignConfig, run_campaign, scaling_fit, tts_optimize

__version__ = "0.1.0"

__all__ = [
    "LatticeSpec", "SpinGlassInstance", "energy", "generate_ferromagnet", "generate_spin_glass",
    "load_instance", "save_instance", "single_spin",
    "CaRunParams", "ca_anneal", "ca_equilibrium_measure", "search_ground_state",
    "PimcParams", "sqa_anneal", "sqa_equilibrium_measure",
    "Schedule", "build_adaptive_schedule", "exponential_schedule", "hybrid_schedule", "linear_schedule",
    "CampaignConfig", "run_campaign", "scaling_fit", "tts_optimize",
]
