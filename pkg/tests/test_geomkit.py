import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leotrack.chanmodel import SPEED_OF_LIGHT
from leotrack.geomkit import (
    AzimuthUndefinedError,
    GeometryError,
    OrbitSpec,
    ProcessNoiseSpec,
    EvolutionMatrix,
    array_frame,
    build_evolution,
    doppler_gradient,
    evolve_state,
    jacobian_G,
    make_state,
    measure_azimuth,
    measure_doppler,
    measure_elevation,
    measurement_map,
    orbit_from_normal,
    orbit_velocity,
    project_onto_plane,
    rot_about_x,
    rot_about_z,
    rotation_angle,
)

LAMBDA = SPEED_OF_LIGHT / 1.91e9
R_SAT = 6.97e6


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def sat_state(r=R_SAT, speed=7600.0):
    return make_state([r, 0, 0], [0, speed, 0])


class TestRotations:
    def test_identity_at_zero(self):
        np.testing.assert_array_equal(rot_about_z(0), np.eye(3))
        np.testing.assert_array_equal(rot_about_x(0), np.eye(3))

    def test_quarter_turns(self):
        np.testing.assert_allclose(rot_about_z(np.pi / 2) @ [1, 0, 0], [0, 1, 0], atol=1e-15)
        np.testing.assert_allclose(rot_about_x(np.pi / 2) @ [0, 1, 0], [0, 0, 1], atol=1e-15)

    def test_inverse(self):
        np.testing.assert_allclose(rot_about_z(0.73) @ rot_about_z(-0.73), np.eye(3), atol=1e-15)
        np.testing.assert_allclose(rot_about_x(1.1).T @ rot_about_x(1.1), np.eye(3), atol=1e-15)


class TestEvolution:
    def test_stationary(self):
        F = build_evolution(OrbitSpec(0.3, 0.5, 0.0, 1.0), 2.5).F
        np.testing.assert_allclose(F, np.eye(3), atol=1e-15)

    def test_in_plane(self):
        F = build_evolution(OrbitSpec(0.0, 0.0, np.pi / 2, 1.0), 1.0).F
        np.testing.assert_allclose(F, rot_about_z(np.pi / 2), atol=1e-15)

    def test_satellite_rotation_angle(self):
        spec = OrbitSpec(0.0, np.deg2rad(53), 7600 / R_SAT, R_SAT)
        F = build_evolution(spec, 2.5).F
        assert abs(rotation_angle(F) - 7600 / 6.97e6 * 2.5) < 1e-12
        assert abs(rotation_angle(F) - 2.7260e-3) < 1e-7

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-np.pi, np.pi), st.floats(0, 3.14), st.floats(-1e-2, 1e-2), st.floats(0.1, 10))
    def test_orthogonal(self, tz, tx, omega, t):
        F = build_evolution(OrbitSpec(tz, tx, omega, 7e6), t).F
        np.testing.assert_allclose(F.T @ F, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(F) - 1) < 1e-12
        assert abs(rotation_angle(F) - abs(omega) * t) < 1e-12

    def test_group_property(self):
        spec = OrbitSpec(0.4, 0.9, 1e-3, 7e6)
        f1, f2 = build_evolution(spec, 1.0).F, build_evolution(spec, 2.0).F
        np.testing.assert_allclose(f1 @ f2, build_evolution(spec, 3.0).F, atol=1e-10)

    def test_orbit_from_normal_roundtrip(self):
        n = unit([1, -1, 0.3])
        spec = orbit_from_normal(n, 27.8, 6.37e6)
        np.testing.assert_allclose(spec.normal, n, atol=1e-12)

    def test_rejects_bad_spec(self):
        with pytest.raises(ValueError):
            OrbitSpec(0, 0, 0, -1.0)
        with pytest.raises(ValueError):
            build_evolution(OrbitSpec(0, 0, 0, 1.0), 0.0)


class TestEvolveState:
    def test_identity_no_noise(self):
        q = make_state([1, 2, 3], [4, 5, 6])
        np.testing.assert_array_equal(evolve_state(q, EvolutionMatrix(np.eye(3))), q)

    def test_norms_preserved_over_blocks(self):
        spec = OrbitSpec(0.2, np.deg2rad(53), 7600 / R_SAT, R_SAT)
        ev = build_evolution(spec, 2.5)
        q = make_state([R_SAT, 0, 0], orbit_velocity(spec, [R_SAT, 0, 0]))
        q0 = q.copy()
        for _ in range(10):
            q = evolve_state(q, ev)
        assert abs(np.linalg.norm(q[:3]) / np.linalg.norm(q0[:3]) - 1) < 1e-9
        assert abs(np.linalg.norm(q[3:]) / np.linalg.norm(q0[3:]) - 1) < 1e-9

    def test_equatorial_quarter_turn(self):
        ev = build_evolution(OrbitSpec(0, 0, np.pi / 2, R_SAT), 1.0)
        q = evolve_state(sat_state(), ev)
        np.testing.assert_allclose(q[:3], [0, R_SAT, 0], atol=1e-6 * R_SAT)

    def test_noise_is_seeded(self):
        q = make_state([1, 2, 3], [4, 5, 6])
        ev, noise = EvolutionMatrix(np.eye(3)), ProcessNoiseSpec(10, 1)
        a = evolve_state(q, ev, noise, np.random.default_rng(7))
        b = evolve_state(q, ev, noise, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)
        assert not np.allclose(a, q)


class TestFrame:
    def test_axis_aligned(self):
        f = array_frame(sat_state())
        np.testing.assert_allclose(f.n, [-1, 0, 0])
        np.testing.assert_allclose(f.s_x, [0, 0, 1])
        np.testing.assert_allclose(f.s_y, [0, 1, 0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
    def test_orthonormal(self, xs):
        p, v = np.array(xs[:3]) * 7e6, np.array(xs[3:]) * 7e3
        if np.linalg.norm(np.cross(p, v)) <= 1e3 * np.linalg.norm(p):
            return
        f = array_frame(make_state(p, v))
        basis = np.array([f.s_x, f.s_y, f.n])
        np.testing.assert_allclose(basis @ basis.T, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(np.cross(f.s_x, f.s_y), f.n, atol=1e-12)
        assert abs(f.n @ p + np.linalg.norm(p)) < 1e-9 * np.linalg.norm(p)

    def test_degenerate(self):
        with pytest.raises(GeometryError):
            array_frame(make_state([1, 0, 0], [2, 0, 0]))


class TestProjection:
    def test_in_plane_unchanged(self):
        p = project_onto_plane([1, 2, 0], [0, 0, 0], [0, 0, 1])
        np.testing.assert_allclose(p, [1, 2, 0])

    def test_axis_aligned(self):
        np.testing.assert_allclose(project_onto_plane([1, 2, 3], [0, 0, 0], [0, 0, 1]), [1, 2, 0])

    def test_residual_parallel(self, rng):
        for _ in range(20):
            p_u, p_s, n = rng.standard_normal((3, 3)) * [[1e6], [1e6], [1]]
            pp = project_onto_plane(p_u, p_s, n)
            assert abs(unit(n) @ (pp - p_s)) < 1e-9 * np.linalg.norm(p_s)
            assert np.linalg.norm(np.cross(p_u - pp, n)) < 1e-9 * np.linalg.norm(p_u) * np.linalg.norm(n)


class TestMeasurements:
    def test_doppler_zero_cases(self):
        s = make_state([0, 0, 1e6], [1, 2, 3])
        assert measure_doppler(s, make_state([0, 0, 0], [1, 2, 3]), LAMBDA) == 0
        assert measure_doppler(s, make_state([0, 0, 0], [2, 2, 3]), LAMBDA) == 0

    def test_doppler_closing(self):
        s = make_state([1e6, 0, 0], [-7600, 0, 0])
        u = measure_doppler(s, make_state([0, 0, 0], [0, 0, 0]), LAMBDA)
        assert abs(LAMBDA - 0.157068) < 1e-6
        assert abs(u - 7600 / LAMBDA) < 1e-9 * u
        assert abs(u - 48385) < 1e-4 * 48385

    def test_doppler_coincident(self):
        q = make_state([1, 1, 1], [0, 0, 0])
        with pytest.raises(GeometryError):
            measure_doppler(q, q, LAMBDA)

    def test_elevation_cases(self):
        n = np.array([0, 0, 1.0])
        s = make_state([0, 0, 1], [0, 0, 0])
        assert abs(measure_elevation(s, make_state([0, 0, 0], [0, 0, 0]), n) - np.pi / 2) < 1e-15
        assert abs(measure_elevation(make_state([1, 0, 0], [0, 0, 0]), make_state([0, 0, 0], [0, 0, 0]), n)) < 1e-15
        t = np.array([np.cos(0.3), np.sin(0.3), 0])
        d = np.cos(np.pi / 6) * t + np.sin(np.pi / 6) * n
        assert abs(measure_elevation(make_state(d, [0, 0, 0]), make_state([0, 0, 0], [0, 0, 0]), n) - np.pi / 6) < 1e-12

    def test_azimuth_cases(self):
        s = sat_state()
        f = array_frame(s)  # n = -x, s_x = +z, s_y = +y
        gu = lambda p: make_state(p, [0, 0, 0])
        assert abs(measure_azimuth(s, gu([6e6, 0, 1e5]), f) - np.pi / 2) < 1e-12
        assert abs(measure_azimuth(s, gu([6e6, 1e5, 0]), f)) < 1e-12
        assert abs(measure_azimuth(s, gu([6e6, 0, -1e5]), f) + np.pi / 2) < 1e-12
        with pytest.raises(AzimuthUndefinedError):
            measure_azimuth(s, gu([6e6, 0, 0]), f)

    def test_map_matches_scalar_ops(self, scn):
        q_s, q_u = scn.initial_states()
        f = array_frame(q_s)
        z = measurement_map(q_s, q_u, f, LAMBDA)
        assert z.doppler == measure_doppler(q_s, q_u, LAMBDA)
        assert z.elevation == measure_elevation(q_s, q_u, f.n)
        assert z.azimuth == measure_azimuth(q_s, q_u, f)

    def test_initial_scenario_golden(self, scn):
        q_s, q_u = scn.initial_states()
        np.testing.assert_allclose(q_s[:3], [6.97e6, 0, 0])
        np.testing.assert_allclose(q_u[:3], [5e6, 2.7908e6, 2.7908e6])
        z = measurement_map(q_s, q_u, array_frame(q_s), LAMBDA)
        np.testing.assert_allclose(z, [42856.1608, 0.462959501, -0.13962634], rtol=1e-8)

    def test_zero_relative_velocity(self):
        s = make_state([7e6, 0, 0], [0, 7e3, 0])
        z = measurement_map(s, make_state([6e6, 1e5, 2e5], [0, 7e3, 0]), array_frame(s), LAMBDA)
        assert z.doppler == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
    def test_angle_ranges_and_velocity_independence(self, dp, dv):
        s = sat_state()
        f = array_frame(s)
        p_u = np.array([6.37e6, 0, 0]) + np.array(dp) * 2e6
        if np.linalg.norm(np.cross(s[:3] - p_u, f.n)) < 1.0:
            return
        z1 = measurement_map(s, make_state(p_u, [0, 0, 0]), f, LAMBDA)
        z2 = measurement_map(s, make_state(p_u, np.array(dv) * 1e3), f, LAMBDA)
        assert 0 <= z1.elevation <= np.pi / 2
        assert -np.pi / 2 <= z1.azimuth <= np.pi / 2
        assert (z1.elevation, z1.azimuth) == (z2.elevation, z2.azimuth)


class TestJacobian:
    def test_angle_rows_ignore_velocity(self, scn):
        q_s, q_u = scn.initial_states()
        G = jacobian_G(q_s, q_u, array_frame(q_s), LAMBDA)
        assert G.shape == (3, 6)
        assert np.all(G[1:, 3:] == 0.0)

    def test_doppler_row_los_along_x(self):
        q_s = make_state([1e6, 0, 0], [0, 7e3, 0])
        q_u = make_state([0, 1e3, 1e3], [0, 0, 0])
        G = jacobian_G(q_s, q_u, array_frame(q_s), LAMBDA)
        los = unit(q_s[:3] - q_u[:3])
        assert abs(G[0, 3] - los[0] / LAMBDA) < 1e-5 / LAMBDA

    def test_matches_analytic_gradient(self, rng):
        for _ in range(20):
            q_s = make_state(unit(rng.standard_normal(3)) * R_SAT, rng.standard_normal(3) * 7e3)
            q_u = make_state(q_s[:3] * 6.37 / 6.97 + rng.standard_normal(3) * 5e5, rng.standard_normal(3) * 30)
            G = jacobian_G(q_s, q_u, array_frame(q_s), LAMBDA)
            ref = doppler_gradient(q_s, q_u, LAMBDA)
            assert np.linalg.norm(G[0] - ref) <= 1e-5 * np.linalg.norm(ref)
