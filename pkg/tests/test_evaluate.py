import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from poseworld.errors import DegenerateConfigurationError
from poseworld.evaluate import (Sim3, TwistSamplerConfig, compute_errors,
                                run_drift_experiment, sample_twists,
                                umeyama_align, _integrate_exact,
                                _integrate_float32, _integrate_linear)
from poseworld.se3 import (Pose, Trajectory, Twist, accumulate, compose,
                           exp_twist, inverse, rotation_angle)


def random_traj(rng, n=30):
    deltas = [exp_twist(Twist(rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.2, 0.2, 3)))
              for _ in range(n - 1)]
    return accumulate(deltas)


def random_sim3(rng, s_low=0.1, s_high=10.0):
    r = Rotation.random(random_state=np.random.RandomState(
        int(rng.integers(2**31)))).as_matrix()
    s = float(np.exp(rng.uniform(np.log(s_low), np.log(s_high))))
    return Sim3(s, r, rng.uniform(-5, 5, 3))


def apply_sim3(sim: Sim3, traj: Trajectory) -> Trajectory:
    return Trajectory([sim.apply_pose(p) for p in traj.poses], traj.frame_interval)


def residual(sim: Sim3, est: Trajectory, ref: Trajectory) -> float:
    diff = sim.apply_points(est.positions()) - ref.positions()
    return float(np.sum(diff * diff))


class TestUmeyama:
    def test_self_alignment_is_identity(self):
        traj = random_traj(np.random.default_rng(0))
        sim = umeyama_align(traj, traj)
        assert sim.s == pytest.approx(1.0, abs=1e-12)
        assert np.abs(sim.R - np.eye(3)).max() <= 1e-12
        assert np.abs(sim.t).max() <= 1e-12

    def test_recovers_inverse_of_known_transform(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            ref = random_traj(rng)
            g = random_sim3(rng)
            est = apply_sim3(g, ref)
            sim = umeyama_align(est, ref)
            ginv = g.inverse()
            assert sim.s == pytest.approx(ginv.s, rel=1e-9)
            assert np.abs(sim.R - ginv.R).max() <= 1e-9
            assert np.abs(sim.t - ginv.t).max() <= 1e-8
            assert residual(sim, est, ref) <= 1e-18 * max(1, len(ref))

    def test_beats_random_candidates_on_noisy_data(self):
        rng = np.random.default_rng(2)
        ref = random_traj(rng, n=40)
        noisy = Trajectory([Pose(p.R, p.t + rng.normal(0, 0.01, 3))
                            for p in ref.poses])
        sim = umeyama_align(noisy, ref)
        best = residual(sim, noisy, ref)
        for _ in range(1000):
            cand = random_sim3(rng, 0.5, 2.0)
            assert best <= residual(cand, noisy, ref) + 1e-15

    def test_collinear_rejected(self):
        poses = [Pose(np.eye(3), [float(i), 0, 0]) for i in range(10)]
        traj = Trajectory(poses)
        with pytest.raises(DegenerateConfigurationError):
            umeyama_align(traj, traj)

    def test_coincident_rejected(self):
        traj = Trajectory([Pose.identity()] * 5)
        with pytest.raises(DegenerateConfigurationError):
            umeyama_align(traj, traj)

    def test_length_mismatch(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError):
            umeyama_align(random_traj(rng, 10), random_traj(rng, 11))


class TestComputeErrors:
    def test_identical_trajectories_zero(self):
        traj = random_traj(np.random.default_rng(4))
        err = compute_errors(traj, traj)
        for v in err.as_dict().values():
            assert v <= 1e-12

    def test_uniform_scale_absorbed(self):
        ref = random_traj(np.random.default_rng(5))
        est = Trajectory([Pose(p.R, 2.0 * p.t) for p in ref.poses])
        err = compute_errors(est, ref)
        for v in err.as_dict().values():
            assert v <= 1e-9

    def test_ten_degree_step_gives_exact_mean(self):
        yaw10 = Rotation.from_euler("y", 10, degrees=True).as_matrix()
        pos = [np.zeros(3), np.array([1.0, 0, 0]), np.array([1.0, 0, 1.0])]
        ref = Trajectory([Pose(np.eye(3), p) for p in pos])
        est = Trajectory([Pose(np.eye(3), pos[0]), Pose(yaw10, pos[1]),
                          Pose(yaw10, pos[2])])
        err = compute_errors(est, ref)
        assert err.rpe_rot == pytest.approx(10.0 / (len(ref) - 1), abs=1e-9)

    def test_rpe_matches_bruteforce(self):
        rng = np.random.default_rng(6)
        est, ref = random_traj(rng, 20), random_traj(rng, 20)
        err = compute_errors(est, ref, delta=2, align=False)
        n = len(ref)
        ts, rs, cs = [], [], []
        eye34 = np.hstack([np.eye(3), np.zeros((3, 1))])
        for j in range(n - 2):
            rel_e = compose(inverse(est.poses[j]), est.poses[j + 2])
            rel_r = compose(inverse(ref.poses[j]), ref.poses[j + 2])
            ts.append(np.linalg.norm(rel_e.t - rel_r.t))
            rs.append(math.degrees(rotation_angle(rel_e.R.T @ rel_r.R)))
            m = compose(rel_e, inverse(rel_r)).matrix()[:3, :] - eye34
            cs.append(np.sqrt((m * m).sum()))
        assert err.rpe_trans == pytest.approx(np.mean(ts), rel=1e-12)
        assert err.rpe_rot == pytest.approx(np.mean(rs), rel=1e-12)
        assert err.rpe_camera == pytest.approx(np.mean(cs), rel=1e-12)

    def test_alignment_invariance(self):
        rng = np.random.default_rng(7)
        est, ref = random_traj(rng), random_traj(rng)
        base = compute_errors(est, ref)
        for _ in range(5):
            g = random_sim3(rng)
            moved = apply_sim3(g, est)
            err = compute_errors(moved, ref)
            for a, b in zip(base.as_dict().values(), err.as_dict().values()):
                assert a == pytest.approx(b, abs=1e-9)

    def test_identical_prefix_steps_contribute_zero(self):
        rng = np.random.default_rng(8)
        prefix = [exp_twist(Twist(rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.2, 0.2, 3)))
                  for _ in range(10)]
        tail_e = [exp_twist(Twist(rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.2, 0.2, 3)))
                  for _ in range(10)]
        tail_r = [exp_twist(Twist(rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.2, 0.2, 3)))
                  for _ in range(10)]
        est = accumulate(prefix + tail_e)
        ref = accumulate(prefix + tail_r)
        err = compute_errors(est, ref, align=False)
        # per-step sums must equal the sums over the differing tail alone
        n_steps = len(est) - 1
        tail_sum = 0.0
        for j in range(10, n_steps):
            rel_e = compose(inverse(est.poses[j]), est.poses[j + 1])
            rel_r = compose(inverse(ref.poses[j]), ref.poses[j + 1])
            tail_sum += np.linalg.norm(rel_e.t - rel_r.t)
        assert err.rpe_trans * n_steps == pytest.approx(tail_sum, abs=1e-9)

    def test_ate_symmetry_under_swap(self):
        rng = np.random.default_rng(9)
        ref = random_traj(rng)
        est = apply_sim3(random_sim3(rng), random_traj(rng))
        sim = umeyama_align(est, ref)
        ate1 = float(np.mean(np.linalg.norm(
            sim.apply_points(est.positions()) - ref.positions(), axis=1)))
        inv = sim.inverse()
        ate2 = sim.s * float(np.mean(np.linalg.norm(
            inv.apply_points(ref.positions()) - est.positions(), axis=1)))
        assert ate1 == pytest.approx(ate2, abs=1e-8)

    def test_length_mismatch_rejected(self):
        rng = np.random.default_rng(10)
        with pytest.raises(ValueError):
            compute_errors(random_traj(rng, 10), random_traj(rng, 12))


class TestDriftExperiment:
    def test_zero_twists_zero_error(self):
        twists = [Twist.zero()] * 50
        truth = _integrate_exact(twists)
        lin = _integrate_linear(twists)
        err = compute_errors(lin, truth, align=False)
        assert err.rpe_trans == 0.0 and err.ate_final == 0.0

    def test_translation_only_linear_exact(self):
        rng = np.random.default_rng(11)
        twists = [Twist(rng.uniform(-0.3, 0.3, 3), [0, 0, 0]) for _ in range(100)]
        truth = _integrate_exact(twists)
        lin = _integrate_linear(twists)
        err = compute_errors(lin, truth, align=False)
        assert err.rpe_trans == 0.0
        assert err.ate_final == 0.0

    def test_constant_coupled_twist_ordering(self):
        a = Twist([0.2, 0.0, 0.25], [0.0, 0.15, 0.02])
        twists = [a] * 10
        truth = Trajectory([exp_twist(a.scale(float(k))) for k in range(11)])
        lie = _integrate_exact(twists)
        lin = _integrate_linear(twists)
        lie_err = compute_errors(lie, truth, align=False)
        lin_err = compute_errors(lin, truth, align=False)
        assert lie_err.ate_final <= 1e-9
        assert lin_err.ate_final > 0

    def test_report_magnitudes_and_ratios(self):
        report = run_drift_experiment(10, 200, TwistSamplerConfig(), seed=7)
        lie = report.rows["lie"]
        lin = report.rows["linear"]
        assert lie["rpe_trans"] * 1e3 <= 0.01
        assert lin["rpe_trans"] >= 100 * lie["rpe_trans"]
        assert lin["ate_final"] >= 1000 * lie["ate_final"]

    def test_sampler_deterministic_and_coupled(self):
        cfg = TwistSamplerConfig()
        a = sample_twists(120, cfg, np.random.default_rng(3))
        b = sample_twists(120, cfg, np.random.default_rng(3))
        assert all(np.array_equal(x.as_vector(), y.as_vector()) for x, y in zip(a, b))
        for t in a:
            assert np.linalg.norm(t.v) >= cfg.min_norm
            assert np.linalg.norm(t.w) >= cfg.min_norm
        # piecewise-constant: one twist per segment
        assert np.array_equal(a[0].as_vector(), a[cfg.segment_len - 1].as_vector())
        assert not np.array_equal(a[0].as_vector(), a[cfg.segment_len].as_vector())

    def test_float32_row_is_rounding_limited(self):
        rng = np.random.default_rng(12)
        twists = sample_twists(200, TwistSamplerConfig(), rng)
        truth = _integrate_exact(twists)
        lie32 = _integrate_float32(twists)
        err = compute_errors(lie32, truth, align=False)
        assert 0 < err.rpe_trans < 1e-5
