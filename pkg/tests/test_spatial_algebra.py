import numpy as np
import pytest

from rbdderiv.model import axis_rotation
from rbdderiv.spatial_algebra import (SpatialTransform, body_wrench, compose, crf, crf_bar, crm, cross3,
                                      cross_force_rows, cross_motion_rows, inverse, skew, spatial_inertia,
                                      xform_force, xform_inertia, xform_motion)


def random_transform(rng):
    return SpatialTransform(axis_rotation(rng.normal(size=3) / 2, rng.uniform(-3, 3)), rng.normal(size=3))


def test_crm_unit_axes():
    v = np.array([1.0, 0, 0, 0, 0, 0])
    u = np.array([0, 1.0, 0, 0, 0, 0])
    np.testing.assert_array_equal(crm(v) @ u, [0, 0, 1, 0, 0, 0])


@pytest.mark.parametrize("op", [crm, crf, crf_bar])
def test_zero_argument_gives_zero_matrix(op):
    np.testing.assert_array_equal(op(np.zeros(6)), np.zeros((6, 6)))


def test_crm_antisymmetric_in_arguments(rng):
    v, u = rng.normal(size=(2, 6))
    np.testing.assert_allclose(crm(v) @ u, -crm(u) @ v, atol=1e-14)


def test_crf_is_negative_crm_transpose(rng):
    v = rng.normal(size=6)
    np.testing.assert_allclose(crf(v) + crm(v).T, 0, atol=1e-15)


def test_crf_adjoint_pairing(rng):
    v, f, u = rng.normal(size=(3, 6))
    assert abs(u @ crf(v) @ f - f @ (crm(u) @ v)) < 1e-13


def test_crf_bar_swaps_arguments(rng):
    f, v = rng.normal(size=(2, 6))
    assert np.abs(crf_bar(f) @ v - crf(v) @ f).max() <= 1e-13


def test_crf_bar_pattern(rng):
    B = crf_bar(rng.normal(size=6))
    np.testing.assert_array_equal(B[3:, 3:], 0)
    np.testing.assert_array_equal(B[:3, 3:], B[3:, :3])


def test_cross3_matches_numpy(rng):
    a, b = rng.normal(size=(2, 5, 3))
    np.testing.assert_allclose(cross3(a, b), np.cross(a, b), atol=1e-15)
    np.testing.assert_allclose(cross3(a.T, b.T, axis=0), np.cross(a, b).T, atol=1e-15)


def test_row_crosses_match_matrix_forms(rng):
    V, U = rng.normal(size=(2, 4, 6))
    np.testing.assert_allclose(cross_motion_rows(V, U), [crm(v) @ u for v, u in zip(V, U)], atol=1e-14)
    np.testing.assert_allclose(cross_force_rows(V, U), [crf(v) @ u for v, u in zip(V, U)], atol=1e-14)


def test_identity_transform_leaves_vectors(rng):
    v = rng.normal(size=6)
    np.testing.assert_array_equal(xform_motion(SpatialTransform.identity(), v), v)


def test_pure_translation_of_angular_velocity():
    p = np.array([0.3, -1.2, 0.5])
    w = np.array([0.2, 0.7, -0.4])
    out = xform_motion(SpatialTransform(np.eye(3), p), np.concatenate((w, np.zeros(3))))
    np.testing.assert_allclose(out[3:], -skew(p) @ w, atol=1e-15)
    np.testing.assert_allclose(out[:3], w)


def test_inverse_round_trip(rng):
    for _ in range(20):
        X = random_transform(rng)
        v = rng.normal(size=6)
        assert np.abs(xform_motion(inverse(X), xform_motion(X, v)) - v).max() <= 1e-12


def test_force_transform_preserves_power(rng):
    X = random_transform(rng)
    v, f = rng.normal(size=(2, 6))
    assert abs(xform_motion(X, v) @ xform_force(X, f) - v @ f) < 1e-12


def test_compose_applies_first_argument_first(rng):
    X1, X2 = random_transform(rng), random_transform(rng)
    v = rng.normal(size=6)
    np.testing.assert_allclose(xform_motion(compose(X1, X2), v), xform_motion(X2, xform_motion(X1, v)), atol=1e-12)


def test_inertia_transform_preserves_kinetic_energy(rng):
    I = spatial_inertia(1.3, rng.normal(size=3), np.diag([0.1, 0.2, 0.25]))
    X = random_transform(rng)
    v = rng.normal(size=6)
    assert abs(v @ I @ v - xform_motion(X, v) @ xform_inertia(X, I) @ xform_motion(X, v)) < 1e-12


def test_rejects_improper_rotation():
    with pytest.raises(ValueError):
        SpatialTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_body_wrench_cases(rng):
    I = spatial_inertia(2.0, rng.normal(size=3), np.diag([0.3, 0.2, 0.1]))
    a = rng.normal(size=6)
    np.testing.assert_array_equal(body_wrench(I, np.zeros(6), a), I @ a)
    np.testing.assert_array_equal(body_wrench(I, np.zeros(6), np.zeros(6)), 0)


def test_body_wrench_point_mass_under_gravity():
    g = np.array([0, 0, -9.81])
    w = body_wrench(spatial_inertia(1.0, np.zeros(3), np.zeros((3, 3))), np.zeros(6), np.concatenate((np.zeros(3), g)))
    np.testing.assert_allclose(w, np.concatenate((np.zeros(3), g)), atol=1e-15)
