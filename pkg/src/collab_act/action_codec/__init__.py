from . import quaternion
from .analysis import DistributionStats, analyze_action_distribution, distribution_stats
from .codec import (
    EncodedAction,
    decode_action,
    decode_actions,
    decode_position,
    decode_rotation,
    encode_action,
    encode_actions,
    encode_position,
    encode_rotation,
    encoded_dim,
    project_hand,
    reconstruct_hand,
)
from .pca import DEFAULT_TAU, PcaModel, fit_pca, reconstruction_mse
from ..trajectory_store.types import RawAction
