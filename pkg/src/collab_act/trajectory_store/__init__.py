from .container import load_dataset, save_dataset
from .sync import attach_labels, canonical_quat, nearest_indices, synchronize, sync_indices, time_grid
from .synthetic import (
    COLLABORATORS,
    Collaborator,
    generate_synthetic_dataset,
    long_horizon_demo,
    mean_flexion,
)
from .types import (
    N_JOINTS,
    N_KEYPOINTS,
    PROMPTS,
    RAW_ACTION_DIM,
    Frame,
    RawAction,
    RawStream,
    SyncConfig,
    Trajectory,
)
