"""Filter-level tests: mechanization, Jacobians, gated updates, init."""

import math

import numpy as np
import pytest

import _oracles as oracles
from flownav import ekf, geom


GRAV = 9.80665


def level_filter(pos_var=4.0, vel_var=0.25):
    cfg = ekf.FilterConfig()
    state = ekf.NavState()
    d = np.full(ekf.STATE_DIM, 1e-6)
    d[ekf.V] = vel_var
    d[ekf.P] = pos_var
    return state, np.diag(d), cfg


def static_imu(t, dt=0.01):
    return ekf.ImuSample(
        t=t, delta_angle=np.zeros(3), delta_velocity=[0.0, 0.0, -GRAV * dt], dt=dt
    )


class TestMechanize:
    def test_static_equilibrium_holds(self):
        state, cov, cfg = level_filter()
        x0 = state.x.copy()
        for k in range(100):
            state, cov = ekf.predict(state, cov, static_imu(0.01 * (k + 1)), cfg)
        assert np.max(np.abs(state.x - x0)) < 1e-9

    def test_velocity_and_position_integration(self):
        # 1 m/s of north delta-velocity spread over 1 s from rest
        state, cov, cfg = level_filter()
        dt = 0.01
        for k in range(100):
            imu = ekf.ImuSample(
                t=dt * (k + 1),
                delta_angle=np.zeros(3),
                delta_velocity=[0.01, 0.0, -GRAV * dt],
                dt=dt,
            )
            state, cov = ekf.predict(state, cov, imu, cfg)
        assert abs(state.v[0] - 1.0) < 1e-9
        assert abs(state.p[0] - 0.5) < 0.005

    def test_yaw_step_accumulation(self):
        state, cov, cfg = level_filter()
        for k in range(157):
            imu = ekf.ImuSample(
                t=0.01 * (k + 1),
                delta_angle=[0.0, 0.0, 0.01],
                delta_velocity=[0.0, 0.0, -GRAV * 0.01],
                dt=0.01,
            )
            state, cov = ekf.predict(state, cov, imu, cfg)
        _, _, yaw = geom.euler_from_quat(state.q)
        assert abs(yaw - math.pi / 2) < 1e-3

    def test_gyro_bias_is_subtracted(self):
        state, _, cfg = level_filter()
        state.x[ekf.BG] = [0.0, 0.0, 0.01]
        imu = ekf.ImuSample(
            t=0.01, delta_angle=[0.0, 0.0, 0.01],
            delta_velocity=[0.0, 0.0, -GRAV * 0.01], dt=0.01,
        )
        out = ekf.mechanize(state.x, imu, cfg.gravity_vec())
        assert np.allclose(out[ekf.Q], [1, 0, 0, 0], atol=1e-12)

    def test_accel_bias_is_subtracted(self):
        state, _, cfg = level_filter()
        state.x[ekf.BA] = [0.02, 0.0, 0.0]
        imu = ekf.ImuSample(
            t=0.01, delta_angle=np.zeros(3),
            delta_velocity=[0.02, 0.0, -GRAV * 0.01], dt=0.01,
        )
        out = ekf.mechanize(state.x, imu, cfg.gravity_vec())
        assert np.allclose(out[ekf.V], 0.0, atol=1e-12)

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(3)
        states = rng.normal(size=(5, ekf.STATE_DIM)) * 0.1
        states[:, 0] += 1.0
        states[:, ekf.Q] = geom.quat_normalize(states[:, ekf.Q])
        imu = ekf.ImuSample(
            t=0.01, delta_angle=[0.01, -0.02, 0.005],
            delta_velocity=[0.05, 0.01, -0.09], dt=0.01,
        )
        g = np.array([0.0, 0.0, GRAV])
        batched = ekf.mechanize(states, imu, g)
        for i in range(5):
            single = ekf.mechanize(states[i], imu, g)
            assert np.allclose(batched[i], single, atol=1e-14)


class TestJacobians:
    def generic_state(self):
        state = ekf.NavState()
        state.x[ekf.Q] = geom.quat_from_euler(0.1, -0.2, 0.7)
        state.x[ekf.V] = [1.5, -0.7, 0.2]
        state.x[ekf.P] = [10.0, -4.0, -12.0]
        state.x[ekf.BG] = [1e-4, -2e-4, 5e-5]
        state.x[ekf.BA] = [1e-3, 5e-4, -2e-3]
        state.x[ekf.MN] = [0.22, 0.0, 0.41]
        state.x[ekf.MB] = [0.005, -0.003, 0.002]
        return state

    def test_transition_fd_step_insensitive(self):
        state = self.generic_state()
        imu = ekf.ImuSample(
            t=0.01, delta_angle=[0.004, -0.003, 0.005],
            delta_velocity=[0.02, -0.01, -0.098], dt=0.01,
        )
        g = np.array([0.0, 0.0, GRAV])
        f1 = ekf.transition_jacobian(state, imu, g, step=1e-6)
        f2 = ekf.transition_jacobian(state, imu, g, step=1e-5)
        assert np.allclose(f1, f2, rtol=1e-3, atol=1e-9)

    def test_measurement_fd_step_insensitive(self):
        state = self.generic_state()
        for kind in ekf.MEASUREMENT_DIMS:
            h1 = ekf.measurement_jacobian(state, kind, step=1e-6)
            h2 = ekf.measurement_jacobian(state, kind, step=1e-5)
            assert np.allclose(h1, h2, rtol=1e-3, atol=1e-9), kind

    def test_linear_models_have_exact_jacobians(self):
        state = self.generic_state()
        h = ekf.measurement_jacobian(state, "gps_pos")
        expect = np.zeros((3, ekf.STATE_DIM))
        expect[:, ekf.P] = np.eye(3)
        assert np.allclose(h, expect, atol=1e-8)
        h = ekf.measurement_jacobian(state, "baro")
        assert abs(h[0, 9] + 1.0) < 1e-8
        assert np.sum(np.abs(h)) == pytest.approx(1.0, abs=1e-7)


class TestMeasurementModels:
    def test_gps_and_baro(self):
        state = ekf.NavState()
        state.x[ekf.P] = [3.0, -2.0, -5.0]
        state.x[ekf.V] = [1.0, 0.5, -0.1]
        assert np.allclose(ekf.measurement_model(state.x, "gps_pos"), [3, -2, -5])
        assert np.allclose(ekf.measurement_model(state.x, "gps_vel"), [1, 0.5, -0.1])
        assert np.allclose(ekf.measurement_model(state.x, "baro"), [5.0])

    def test_mag_level_and_yawed(self):
        field = np.array([0.22, 0.0, 0.41])
        state = ekf.NavState()
        state.x[ekf.MN] = field
        assert np.allclose(ekf.measurement_model(state.x, "mag"), field, atol=1e-12)
        state.x[ekf.Q] = geom.quat_from_euler(0.0, 0.0, math.pi / 2)
        expect = np.array([0.0, -0.22, 0.41])
        assert np.allclose(ekf.measurement_model(state.x, "mag"), expect, atol=1e-12)
        state.x[ekf.MB] = [0.01, 0.02, -0.01]
        assert np.allclose(
            ekf.measurement_model(state.x, "mag"), expect + state.x[ekf.MB], atol=1e-12
        )

    def test_flow_vel_is_body_horizontal_velocity(self):
        state = ekf.NavState()
        state.x[ekf.V] = [1.0, 0.0, 0.0]
        assert np.allclose(ekf.measurement_model(state.x, "flow_vel"), [1, 0], atol=1e-12)
        state.x[ekf.Q] = geom.quat_from_euler(0.0, 0.0, math.pi / 2)
        assert np.allclose(ekf.measurement_model(state.x, "flow_vel"), [0, -1], atol=1e-12)


class TestUpdate:
    def test_gain_half_matches_scalar_oracle(self):
        # position variance equal to measurement variance gives gain 0.5
        state, cov, cfg = level_filter(pos_var=4.0)
        state.x[ekf.P] = [1.0, 2.0, 3.0]
        meas = ekf.Measurement(
            kind="gps_pos", value=[1.4, 2.0, 3.0], std=[2.0, 2.0, 2.0], t=0.0
        )
        new_state, new_cov, rec = ekf.update(state, cov, meas, cfg)
        assert rec.accepted
        x_ref, p_ref = oracles.kalman_1d(1.0, 4.0, 0.0, 4.0, [1.4])
        assert abs(new_state.p[0] - x_ref[-1]) < 1e-9
        assert abs(new_cov[7, 7] - p_ref[-1]) < 1e-9
        assert abs(new_state.p[0] - 1.2) < 1e-9
        # untouched blocks stay put
        assert np.allclose(new_state.q, [1, 0, 0, 0], atol=1e-12)
        assert np.allclose(new_state.v, 0.0, atol=1e-12)

    def test_sequence_matches_scalar_oracle(self):
        state, cov, cfg = level_filter(pos_var=2.5)
        zs = [0.3, -0.1, 0.2, 0.05]
        for i, z in enumerate(zs):
            meas = ekf.Measurement(
                kind="gps_pos", value=[z, 0.0, 0.0], std=[1.2, 1.2, 2.5], t=float(i)
            )
            state, cov, rec = ekf.update(state, cov, meas, cfg)
            assert rec.accepted
        x_ref, p_ref = oracles.kalman_1d(0.0, 2.5, 0.0, 1.2**2, zs)
        assert abs(state.p[0] - x_ref[-1]) < 1e-9
        assert abs(cov[7, 7] - p_ref[-1]) < 1e-9

    def test_outlier_is_gated_and_state_unchanged(self):
        state, cov, cfg = level_filter(pos_var=1.0)
        x0 = state.x.copy()
        c0 = cov.copy()
        meas = ekf.Measurement(
            kind="gps_pos", value=[10.0, 0.0, 0.0], std=[1.0, 1.0, 1.0], t=0.0
        )
        new_state, new_cov, rec = ekf.update(state, cov, meas, cfg)
        assert not rec.accepted
        assert rec.nis > ekf.gate_threshold(3)
        assert np.array_equal(new_state.x, x0)
        assert np.array_equal(new_cov, c0)

    def test_gate_threshold_values(self):
        # 99% chi-square quantiles for small dims
        assert ekf.gate_threshold(1) == pytest.approx(6.6349, abs=1e-3)
        assert ekf.gate_threshold(2) == pytest.approx(9.2103, abs=1e-3)
        assert ekf.gate_threshold(3) == pytest.approx(11.3449, abs=1e-3)

    def test_independent_linear_updates_commute(self):
        def run(order):
            state, cov, cfg = level_filter(pos_var=4.0)
            gps = ekf.Measurement(
                kind="gps_pos", value=[0.5, -0.3, 0.8], std=[1.2, 1.2, 2.5], t=1.0
            )
            baro = ekf.Measurement(kind="baro", value=[0.4], std=[0.8], t=1.0)
            seq = [gps, baro] if order == 0 else [baro, gps]
            for m in seq:
                state, cov, _ = ekf.update(state, cov, m, cfg)
            return state.x.copy()

        assert np.max(np.abs(run(0) - run(1))) < 1e-6

    def test_bias_clamp(self):
        state, cov, cfg = level_filter()
        state.x[ekf.BG] = [0.049, 0.0, 0.0]
        cov[10, 10] = 1.0
        cov[10, 7] = cov[7, 10] = 0.9  # strong coupling drags the bias up
        meas = ekf.Measurement(
            kind="gps_pos", value=[2.0, 0.0, 0.0], std=[1.0, 1.0, 1.0], t=0.0
        )
        new_state, _, rec = ekf.update(state, cov, meas, cfg)
        assert rec.accepted
        assert new_state.b_dang[0] == pytest.approx(ekf.BIAS_DANG_LIMIT)

    def test_quaternion_renormalized_after_update(self):
        state, cov, cfg = level_filter()
        cov[0, 0] = cov[1, 1] = 0.01
        cov[0, 7] = cov[7, 0] = 0.05
        meas = ekf.Measurement(
            kind="gps_pos", value=[1.0, 0.0, 0.0], std=[1.0, 1.0, 1.0], t=0.0
        )
        new_state, _, _ = ekf.update(state, cov, meas, cfg)
        assert abs(np.linalg.norm(new_state.q) - 1.0) < 1e-12


class TestCovarianceHealth:
    def test_predict_update_cycle_stays_symmetric_psd(self):
        rng = np.random.default_rng(11)
        state, cov, cfg = level_filter()
        t = 0.0
        for k in range(50):
            t += 0.01
            dang = rng.normal(0, 1e-3, 3)
            dvel = np.array([0, 0, -GRAV * 0.01]) + rng.normal(0, 1e-3, 3)
            state, cov = ekf.predict(state, cov, ekf.ImuSample(t, dang, dvel, 0.01), cfg)
            if k % 10 == 5:
                z = state.p + rng.normal(0, 0.5, 3)
                meas = ekf.Measurement("gps_pos", z, [1.2, 1.2, 2.5], t)
                state, cov, _ = ekf.update(state, cov, meas, cfg)
            assert np.allclose(cov, cov.T, atol=1e-12)
            assert np.linalg.eigvalsh(cov).min() > -1e-9

    def test_negative_covariance_faults(self):
        cov = -np.eye(ekf.STATE_DIM)
        with pytest.raises(ekf.NumericalFault):
            ekf._check_covariance(cov)

    def test_nonfinite_state_faults(self):
        state, cov, cfg = level_filter()
        state.x[4] = np.nan
        with pytest.raises(ekf.NumericalFault):
            ekf.predict(state, cov, static_imu(0.01), cfg)


class TestInit:
    def test_level_static_init(self):
        cfg = ekf.FilterConfig()
        gps = ekf.Measurement("gps_pos", [1.0, -2.0, -0.5], [1.2, 1.2, 2.5], 0.0)
        mag = ekf.Measurement("mag", [0.22, 0.0, 0.41], 0.01, 0.0)
        state, cov = ekf.init_state(gps, mag, [0.0, 0.0, -GRAV], cfg)
        roll, pitch, yaw = geom.euler_from_quat(state.q)
        assert abs(roll) < 1e-9 and abs(pitch) < 1e-9 and abs(yaw) < 1e-9
        assert np.allclose(state.p, [1.0, -2.0, -0.5])
        assert np.allclose(state.v, 0.0)
        assert np.allclose(state.mag_earth, [0.22, 0.0, 0.41], atol=1e-12)
        assert np.allclose(cov, cov.T)
        assert np.linalg.eigvalsh(cov).min() > 0

    def test_pitched_init_recovers_attitude(self):
        cfg = ekf.FilterConfig()
        th = math.radians(10.0)
        accel = [GRAV * math.sin(th), 0.0, -GRAV * math.cos(th)]
        # body-frame field for a pitched, yawed vehicle
        q_true = geom.quat_from_euler(0.0, th, 0.6)
        field = np.array([0.22, 0.0, 0.41])
        m_body = geom.rotate_vec_inv(q_true, field)
        gps = ekf.Measurement("gps_pos", [0.0, 0.0, 0.0], 1.0, 0.0)
        mag = ekf.Measurement("mag", m_body, 0.01, 0.0)
        state, _ = ekf.init_state(gps, mag, accel, cfg)
        roll, pitch, yaw = geom.euler_from_quat(state.q)
        assert abs(pitch - th) < 1e-9
        assert abs(roll) < 1e-9
        assert abs(yaw - 0.6) < 1e-9
        assert np.allclose(state.mag_earth, field, atol=1e-9)

    def test_rolled_init(self):
        cfg = ekf.FilterConfig()
        ph = math.radians(-7.0)
        accel = [0.0, -GRAV * math.sin(ph) * -1.0, -GRAV * math.cos(ph)]
        # roll ph tilts gravity onto +y for negative ph
        accel = list(
            geom.rotate_vec_inv(
                geom.quat_from_euler(ph, 0.0, 0.0), np.array([0, 0, -GRAV])
            )
        )
        q_true = geom.quat_from_euler(ph, 0.0, -1.2)
        m_body = geom.rotate_vec_inv(q_true, np.array([0.22, 0.0, 0.41]))
        state, _ = ekf.init_state(
            ekf.Measurement("gps_pos", np.zeros(3), 1.0, 0.0),
            ekf.Measurement("mag", m_body, 0.01, 0.0),
            accel, cfg,
        )
        roll, pitch, yaw = geom.euler_from_quat(state.q)
        assert abs(roll - ph) < 1e-9
        assert abs(yaw + 1.2) < 1e-9

    def test_velocity_seed(self):
        cfg = ekf.FilterConfig()
        gps = ekf.Measurement("gps_pos", np.zeros(3), 1.0, 0.0)
        vel = ekf.Measurement("gps_vel", [0.3, -0.1, 0.02], 0.3, 0.0)
        mag = ekf.Measurement("mag", [0.22, 0.0, 0.41], 0.01, 0.0)
        state, _ = ekf.init_state(gps, mag, [0, 0, -GRAV], cfg, first_gps_vel=vel)
        assert np.allclose(state.v, [0.3, -0.1, 0.02])

    def test_non_static_accel_rejected(self):
        cfg = ekf.FilterConfig()
        gps = ekf.Measurement("gps_pos", np.zeros(3), 1.0, 0.0)
        mag = ekf.Measurement("mag", [0.22, 0.0, 0.41], 0.01, 0.0)
        with pytest.raises(ekf.InitializationError):
            ekf.init_state(gps, mag, [0.0, 0.0, -0.5 * GRAV], cfg)
        with pytest.raises(ekf.InitializationError):
            ekf.init_state(gps, mag, [0.0, 0.0, -1.5 * GRAV], cfg)


class TestOutputAndSnapshots:
    def test_output_vector_ordering(self):
        state = ekf.NavState()
        state.x[ekf.Q] = geom.quat_from_euler(0.02, -0.03, 1.1)
        state.x[ekf.V] = [1.0, 2.0, 3.0]  # N, E, D
        state.x[ekf.P] = [4.0, 5.0, 6.0]
        state.x[ekf.BG] = [1e-4, 2e-4, 3e-4]
        out = ekf.output_vector(state, nominal_imu_dt=0.01)
        assert out.v_n == 1.0 and out.v_d == 3.0 and out.v_e == 2.0
        assert out.p_n == 4.0 and out.p_d == 6.0 and out.p_e == 5.0
        assert out.g_x == pytest.approx(0.01)
        assert out.yaw == pytest.approx(1.1, abs=1e-9)
        arr = out.as_array()
        assert arr.shape == (12,)
        assert arr[3] == 1.0 and arr[4] == 3.0 and arr[5] == 2.0

    def test_snapshot_roundtrip(self, tmp_path):
        state, cov, cfg = level_filter()
        rows = [(0.5, state, cov), (0.51, state, cov)]
        path = tmp_path / "snap.csv"
        ekf.write_snapshots(path, rows)
        t, states, variances = ekf.read_snapshots(path)
        assert t.tolist() == [0.5, 0.51]
        assert np.allclose(states[0], state.x)
        assert np.allclose(variances[1], np.diag(cov))
        header = path.read_text().splitlines()[0]
        assert header.startswith("t,q0,q1,q2,q3,vn,ve,vd,pn,pe,pd")


class TestValidation:
    def test_imu_dt_bounds(self):
        with pytest.raises(ValueError):
            ekf.ImuSample(0.0, np.zeros(3), np.zeros(3), 0.0)
        with pytest.raises(ValueError):
            ekf.ImuSample(0.0, np.zeros(3), np.zeros(3), 0.11)
        ekf.ImuSample(0.0, np.zeros(3), np.zeros(3), 0.1)

    def test_measurement_validation(self):
        with pytest.raises(ValueError):
            ekf.Measurement("sonar", [1.0], 0.1, 0.0)
        with pytest.raises(ValueError):
            ekf.Measurement("baro", [1.0, 2.0], 0.1, 0.0)
        with pytest.raises(ValueError):
            ekf.Measurement("baro", [1.0], 0.0, 0.0)
        with pytest.raises(ValueError):
            ekf.Measurement("gps_pos", [np.nan, 0, 0], 1.0, 0.0)

    def test_ekf_wrapper_matches_functions(self):
        state, cov, cfg = level_filter()
        filt = ekf.Ekf(ekf.NavState(state.x.copy()), cov.copy(), cfg)
        imu = static_imu(0.01)
        filt.predict(imu)
        s2, c2 = ekf.predict(state, cov, imu, cfg)
        assert np.allclose(filt.state.x, s2.x, atol=1e-15)
        assert np.allclose(filt.cov, c2, atol=1e-15)
