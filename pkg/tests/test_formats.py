import numpy as np
import pytest

from poseworld.actions import InputState
from poseworld.config import SessionConfig, dump_config, parse_config
from poseworld.errors import ParseError
from poseworld.formats import (format_action_script, format_trajectory,
                               frame_digest, parse_action_script,
                               parse_trajectory, pose_from_seven,
                               pose_to_seven)
from poseworld.se3 import Pose, Twist, accumulate, exp_twist


def random_trajectory(rng, n=20):
    deltas = [exp_twist(Twist(rng.uniform(-1, 1, 3), rng.uniform(-0.5, 0.5, 3)))
              for _ in range(n - 1)]
    return accumulate(deltas, frame_interval=0.05)


class TestTrajectoryFormat:
    def test_round_trip(self):
        traj = random_trajectory(np.random.default_rng(0))
        back = parse_trajectory(format_trajectory(traj))
        assert len(back) == len(traj)
        assert back.frame_interval == traj.frame_interval
        for a, b in zip(back.poses, traj.poses):
            assert np.abs(a.matrix() - b.matrix()).max() <= 1e-12

    def test_header_required(self):
        with pytest.raises(ParseError):
            parse_trajectory("0 0.0 0 0 0 1 0 0 0\n")

    def test_malformed_line_names_line_number(self):
        text = ("#camtraj v1 frame_interval=0.05\n"
                "0 0.0 0 0 0 1 0 0 0\n"
                "1 0.05 bad 0 0 1 0 0 0\n")
        with pytest.raises(ParseError) as exc:
            parse_trajectory(text, path="traj.txt")
        assert "traj.txt:3" in str(exc.value)

    def test_wrong_field_count_named(self):
        text = "#camtraj v1 frame_interval=0.05\n0 0.0 1 2 3\n"
        with pytest.raises(ParseError) as exc:
            parse_trajectory(text)
        assert ":2" in str(exc.value)

    def test_quaternion_orthonormal_on_parse(self):
        # slightly denormalized quaternion still yields a valid rotation
        line = "#camtraj v1 frame_interval=0.05\n0 0.0 0 0 0 1.0001 0 0 0\n"
        traj = parse_trajectory(line)
        traj.poses[0].validate(tol=1e-9)

    def test_pose_seven_round_trip(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            p = exp_twist(Twist(rng.uniform(-2, 2, 3), rng.uniform(-1, 1, 3)))
            q = pose_from_seven(pose_to_seven(p))
            assert np.abs(q.matrix() - p.matrix()).max() <= 1e-12


class TestActionScript:
    def test_round_trip(self):
        inputs = [InputState(keys=frozenset("WD"), mouse_dx=3, mouse_dy=-2, dt=0.05),
                  InputState(dt=0.1),
                  InputState(keys=frozenset("S"), mouse_dx=-10, mouse_dy=0, dt=0.05)]
        back = parse_action_script(format_action_script(inputs))
        assert back == inputs

    def test_bad_key_rejected(self):
        with pytest.raises(ParseError) as exc:
            parse_action_script("0 keys=WQ dx=0 dy=0 dt=0.05", path="a.txt")
        assert "a.txt:1" in str(exc.value)

    def test_bad_field_count(self):
        with pytest.raises(ParseError):
            parse_action_script("0 keys=W dx=0 dy=0")

    def test_comments_and_blanks_skipped(self):
        text = "# header\n\n0 keys= dx=0 dy=0 dt=0.05\n"
        assert len(parse_action_script(text)) == 1


class TestConfigFile:
    def test_defaults_round_trip(self):
        cfg = SessionConfig()
        back = parse_config(dump_config(cfg))
        assert back == cfg

    def test_overrides(self):
        text = "N=32\nS=4\nresolution=32x64\nmove_speed=3.5\nseed=9\n"
        cfg = parse_config(text)
        assert cfg.n_steps == 32 and cfg.n_stages == 4
        assert cfg.resolution == (32, 64)
        assert cfg.sensitivity.move_speed == 3.5
        assert cfg.seed == 9

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            parse_config("nonsense=1\n")

    def test_invalid_combination_rejected(self):
        with pytest.raises(ValueError):
            parse_config("N=30\nS=8\n")
        with pytest.raises(ValueError):
            parse_config("long_term_L=99\n")
        with pytest.raises(ValueError):
            parse_config("resolution=30x30\n")

    def test_comments_allowed(self):
        cfg = parse_config("# a comment\nseed=4\n")
        assert cfg.seed == 4


def test_frame_digest_is_content_hash():
    a = np.zeros((4, 4, 3), dtype=np.uint8)
    b = a.copy()
    assert frame_digest(a) == frame_digest(b)
    b[0, 0, 0] = 1
    assert frame_digest(a) != frame_digest(b)
