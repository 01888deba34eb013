"""Lane-following RL workbench: simulator, PPO trainer, baselines and metrics."""

from ._core import (
    ConfigError,
    Env,
    IoError,
    Track,
    clip_surrogate,
    compute_gae,
    evaluate_pd,
    generate_random_map,
    gradcheck,
    lambda_fn,
    load_map,
    map_action,
    step_kinematics,
    train,
    update_kl_coefficient,
)

__all__ = [
    "ConfigError",
    "Env",
    "IoError",
    "Track",
    "clip_surrogate",
    "compute_gae",
    "evaluate_pd",
    "generate_random_map",
    "gradcheck",
    "lambda_fn",
    "load_map",
    "map_action",
    "step_kinematics",
    "train",
    "update_kl_coefficient",
]
