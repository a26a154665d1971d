import numpy as np
import pytest

from ikk import arm, interp, simuser
from ikk.results import rmse


class TestDampedPinv:
    def test_orthonormal_rows_small_damping(self):
        rng = np.random.default_rng(0)
        q, _ = np.linalg.qr(rng.normal(size=(7, 7)))
        J = q[:, :6].T  # 6x7 with orthonormal rows
        pinv = simuser.damped_pinv(J, lam=1e-6)
        assert np.max(np.abs(pinv - J.T)) < 1e-9

    def test_matches_svd_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            J = rng.normal(size=(6, 7))
            lam = rng.uniform(0.01, 0.5)
            pinv = simuser.damped_pinv(J, lam)
            u, s, vt = np.linalg.svd(J, full_matrices=False)
            oracle = vt.T @ np.diag(s / (s * s + lam * lam)) @ u.T
            assert np.max(np.abs(pinv - oracle)) < 1e-9

    def test_zero_matrix(self):
        pinv = simuser.damped_pinv(np.zeros((6, 7)), lam=0.1)
        assert np.array_equal(pinv, np.zeros((7, 6)))

    def test_damping_must_be_positive(self):
        with pytest.raises(ValueError):
            simuser.damped_pinv(np.eye(3), lam=0.0)


class TestGains:
    def test_validation(self):
        with pytest.raises(ValueError):
            simuser.SimUserGains(k_task=-1.0)
        with pytest.raises(ValueError):
            simuser.SimUserGains(damping=0.0)
        with pytest.raises(ValueError):
            simuser.SimUserGains(joint_speed_limit=0.0)


class TestTrackStep:
    @staticmethod
    def setup_state(default_model, volume42):
        node = volume42.nodes[0]
        q = node.mean.copy()
        pose = arm.forward_kinematics(default_model, q)
        basis = interp.interpolate_basis(volume42, pose.position)
        return q, pose, basis

    def test_equilibrium(self, default_model, volume42):
        q, pose, basis = self.setup_state(default_model, volume42)
        q_next, clipped = simuser.track_step(
            default_model, q, pose,
            signal_error=0.0,
            signal_direction=basis.directions[0],
            signal_span=basis.proj_max - basis.proj_min,
            gains=simuser.SimUserGains(noise=0.0),
            dt=0.01,
        )
        assert not clipped
        assert np.max(np.abs(q_next - q)) < 1e-12

    def test_null_motion_leaves_hand_fixed(self, default_model, volume42):
        q, pose, basis = self.setup_state(default_model, volume42)
        q_next, _ = simuser.track_step(
            default_model, q, pose,
            signal_error=2.0,
            signal_direction=basis.directions[0],
            signal_span=basis.proj_max - basis.proj_min,
            gains=simuser.SimUserGains(noise=0.0),
            dt=0.01,
        )
        moved = arm.forward_kinematics(default_model, q_next)
        assert np.linalg.norm(moved.position - pose.position) < 1e-6
        assert np.max(np.abs(q_next - q)) > 1e-5  # it did move in joint space

    def test_pose_error_decreases(self, default_model, volume42):
        q, pose, basis = self.setup_state(default_model, volume42)
        target = arm.HandPose(pose.position + np.array([0.02, -0.01, 0.015]), pose.orientation)
        gains = simuser.SimUserGains(k_null=0.0, noise=0.0)
        err = np.linalg.norm(simuser.pose_error(default_model, pose, target))
        for _ in range(20):
            q, _ = simuser.track_step(
                default_model, q, target,
                signal_error=0.0,
                signal_direction=basis.directions[0],
                signal_span=1.0,
                gains=gains,
                dt=0.01,
            )
            new_pose = arm.forward_kinematics(default_model, q)
            new_err = np.linalg.norm(simuser.pose_error(default_model, new_pose, target))
            assert new_err < err
            err = new_err

    def test_joint_limit_clipping_reported(self, default_model, volume42):
        q, pose, basis = self.setup_state(default_model, volume42)
        # an unclamped violent step toward a far target must exit the limit
        # box, and the step reports the clip
        target = arm.HandPose(pose.position + np.array([0.0, 0.0, 0.5]), pose.orientation)
        gains = simuser.SimUserGains(k_task=500.0, k_null=0.0, noise=0.0, joint_speed_limit=1e9)
        q_next, clipped = simuser.track_step(
            default_model, q, target,
            signal_error=0.0,
            signal_direction=basis.directions[0],
            signal_span=1.0,
            gains=gains,
            dt=1.0,
        )
        assert clipped
        assert default_model.in_limits(q_next)


class ConstantProfile:
    def __init__(self, value, duration=5.0):
        self.value = value
        self.duration = duration

    def value_at(self, t):
        return self.value


class TestRunTracking:
    def test_regulation_rmse(self, default_model, volume42):
        # reference pinned at the starting signal value: pure regulation
        probe = simuser.run_tracking(
            default_model, volume42, simuser.SimUserGains(noise=0.0),
            ConstantProfile(50.0, duration=0.05), seed=0,
        )
        start_value = probe["actual"][0]
        out = simuser.run_tracking(
            default_model, volume42, simuser.SimUserGains(),
            ConstantProfile(start_value, duration=5.0), seed=1,
        )
        assert rmse(out["actual"], out["reference"]) <= 0.5

    def test_hand_drift_bounded(self, default_model, volume42):
        class Sweep:
            duration = 5.0

            def value_at(self, t):
                return 50.0 + 30.0 * np.sin(2 * np.pi * 0.4 * t)

        out = simuser.run_tracking(
            default_model, volume42, simuser.SimUserGains(), Sweep(), seed=2
        )
        drift = np.linalg.norm(out["positions"] - out["positions"][0], axis=1).max()
        assert drift <= 2e-3

    def test_determinism_per_seed(self, default_model, volume42):
        profile = ConstantProfile(60.0, duration=1.0)
        a = simuser.run_tracking(default_model, volume42, simuser.SimUserGains(), profile, seed=9)
        b = simuser.run_tracking(default_model, volume42, simuser.SimUserGains(), profile, seed=9)
        assert np.array_equal(a["actual"], b["actual"])
        assert np.array_equal(a["positions"], b["positions"])
        c = simuser.run_tracking(default_model, volume42, simuser.SimUserGains(), profile, seed=10)
        assert not np.array_equal(a["actual"], c["actual"])

    def test_halving_delay_does_not_hurt(self, default_model, volume42):
        # statistical check: mean tracking error over seeds with half the
        # reaction delay is no worse
        from ikk import experiments

        def mean_rmse(delay):
            errs = []
            for p_seed in experiments.CANONICAL_SEEDS:
                profile = experiments.generate_profile(p_seed, duration=6.0, rate=50.0)
                for s in range(10):
                    gains = simuser.SimUserGains(reaction_delay=delay)
                    out = simuser.run_tracking(
                        default_model, volume42, gains, profile, seed=s, rate=50.0
                    )
                    errs.append(rmse(out["actual"], out["reference"]))
            return float(np.mean(errs))

        assert mean_rmse(0.075) <= mean_rmse(0.15)
