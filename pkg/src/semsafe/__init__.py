"""Language-conditioned semantic safety for 2D robot navigation.

Natural-language instructions are parsed into structured constraint
configurations, grounded against simulated sensing into signed-distance
failure sets, and enforced at control rate by sampling-MPC safety filters
wrapped around a nominal A* + pure-pursuit stack.
"""

from semsafe.core import Control, DynamicsParams, RobotState, clamp_control, rollout, step
from semsafe.language import (
    ConfigSet,
    ParseOutcome,
    SafetyConfig,
    add_config,
    parse_rule_based,
    remove_config,
)

__version__ = "0.1.0"

__all__ = [
    "Control",
    "DynamicsParams",
    "RobotState",
    "clamp_control",
    "step",
    "rollout",
    "SafetyConfig",
    "ConfigSet",
    "ParseOutcome",
    "parse_rule_based",
    "add_config",
    "remove_config",
    "__version__",
]
