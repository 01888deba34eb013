import math
import os
from pathlib import Path

import numpy as np
import pytest

import lanerl

MAPS = Path(os.environ.get("LANERL_SOURCE_DIR", Path(__file__).resolve().parents[2])) / "maps"


def test_action_mappings():
    assert lanerl.map_action("steering", [0.0]) == (1.0, 1.0)
    assert lanerl.map_action("steering", [1.0]) == (1.0, 0.0)
    assert lanerl.map_action("wheel_velocity_braking", [-0.2, 0.5]) == (1.0, 0.5)
    with pytest.raises(Exception):
        lanerl.map_action("steering", [0.0, 0.0])


def test_lambda_and_ppo_helpers():
    phi = math.radians(50)
    assert lanerl.lambda_fn(0.0, phi, 0.05) == 1.0
    assert lanerl.lambda_fn(2 * phi, phi, 0.05) == pytest.approx(-0.05)
    assert lanerl.clip_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert lanerl.update_kl_coefficient(1.0, 0.03, 0.01) == pytest.approx(1.5)
    adv, ret = lanerl.compute_gae([1.0], [0.0], [1], 0.0, 1.0, 1.0)
    assert adv == [1.0] and ret == [1.0]


def test_kinematics_straight_line():
    x, y, h = lanerl.step_kinematics(0.0, 0.0, 0.0, 1.0, 1.0, 0.5)
    assert x == pytest.approx(0.25) and y == pytest.approx(0.0) and h == pytest.approx(0.0)


def test_map_and_lane_pose():
    track = lanerl.load_map(str(MAPS / "loop.map"))
    assert track.total_length > 0
    assert track.lane_width == pytest.approx(track.tile_size / 2)
    with pytest.raises(lanerl.IoError):
        lanerl.load_map(str(MAPS / "does_not_exist.map"))


def test_env_episode():
    env = lanerl.Env(str(MAPS / "loop.map"))
    obs = env.reset(3)
    assert obs.shape == (84, 84, 9) and obs.dtype == np.float32
    assert 0.0 <= obs.min() and obs.max() <= 1.0
    for _ in range(5):
        obs, reward, done, info = env.step([0.0])
        assert math.isfinite(reward)
        assert set(info["lane_pose"]) >= {"d", "psi", "s", "on_road"}
    assert env.action_dim == 1


def test_pd_baseline_survives():
    reports = lanerl.evaluate_pd(str(MAPS / "loop.map"), episodes=2, horizon=5.0)
    assert len(reports) == 2
    for r in reports:
        assert r["survival_time"] == pytest.approx(5.0)
        assert r["distance_ego_lane"] <= r["distance_both_lanes"]


def test_gradcheck():
    r = lanerl.gradcheck(40)
    assert r["max_rel_error"] < 1e-4


def test_short_training_run(tmp_path):
    log = lanerl.train(str(MAPS / "loop.map"),
                       '{"ppo": {"total_steps": 256, "rollout_length": 128}}', str(tmp_path))
    assert len(log) == 2
    assert (tmp_path / "train_log.jsonl").exists()
    with pytest.raises(lanerl.ConfigError):
        lanerl.train(str(MAPS / "loop.map"), '{"ppo": {"clip_epsilon": 0.9}}')
