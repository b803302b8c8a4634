"""
State containers, plant models and gain sets.
"""

from .world import (
    AgentState,
    World,
    Observation,
    SafetyConfig,
    observe,
    global_safety_product,
    per_agent_products,
    min_clearance,
    global_psi,
    sample_configuration,
)
from .dynamics import (
    LagrangianPlant,
    AffinePlant,
    Plant,
    DisturbanceSpec,
    nonlinear_example_plant,
    spacecraft_simulator_plant,
    leo_lagrangian_plant,
    double_integrator_plant,
    hcw_energy,
    get_plant,
    sdc_factorize,
    is_fully_actuated,
    advance,
    propagate,
    rk4_propagate,
)
from .gains import FilterGains, RobustGains

__all__ = [
    "AgentState",
    "World",
    "Observation",
    "SafetyConfig",
    "observe",
    "global_safety_product",
    "per_agent_products",
    "min_clearance",
    "global_psi",
    "sample_configuration",
    "LagrangianPlant",
    "AffinePlant",
    "Plant",
    "DisturbanceSpec",
    "nonlinear_example_plant",
    "spacecraft_simulator_plant",
    "leo_lagrangian_plant",
    "double_integrator_plant",
    "hcw_energy",
    "get_plant",
    "sdc_factorize",
    "is_fully_actuated",
    "advance",
    "propagate",
    "rk4_propagate",
    "FilterGains",
    "RobustGains",
]
