"""Channel estimation toolkit for LIS-assisted mm-Wave massive MIMO downlink."""

__version__ = "0.1.0"

from .channel import (  # noqa: E402
    ChannelRealization,
    LisState,
    PathParams,
    draw_channels,
    perturb_angles,
    reflect_vector,
    single_element_state,
    steering_vector,
)
from .config import ScenarioConfig  # noqa: E402
from .estimators import ChannelEstimate, estimate_ls, ls_cascaded_joint, ls_cascaded_per_column, ls_direct  # noqa: E402
from .pilots import PilotMatrix, corrupt_pilots, make_pilots, simulate_pilots  # noqa: E402

__all__ = [
    "ChannelEstimate",
    "ChannelRealization",
    "LisState",
    "PathParams",
    "PilotMatrix",
    "ScenarioConfig",
    "corrupt_pilots",
    "draw_channels",
    "estimate_ls",
    "ls_cascaded_joint",
    "ls_cascaded_per_column",
    "ls_direct",
    "make_pilots",
    "perturb_angles",
    "reflect_vector",
    "simulate_pilots",
    "single_element_state",
    "steering_vector",
]
