from .net import Layout, PolicyNet, backward, film, forward, init_policy
from .data import Examples, build_examples, make_observation, split_trajectories
from .training import Adam, TrainConfig, evaluate, fit, predict_raw, train
from .experiments import AblationResult, flag_grid, run_ablation, trainer_overfit_experiment
from .checkpoint import load_policy, save_policy
