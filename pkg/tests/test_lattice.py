import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from discrete_darboux.lattice import (
    JostIterationError,
    Potential,
    RationalJost,
    bound_state_profile,
    jost_function,
    jost_solution,
    jost_solution_iterative,
    lambda_of_z,
    recursion_residual,
    regular_polynomial_coeffs,
    regular_solution,
    regular_solution_derivative,
    wronskian_identity_residual,
    z_of_lambda,
)

values = st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=4)
angles = st.floats(0.01, math.pi - 0.01)


def test_potential_json_round_trip():
    V = Potential([1.0, -2.5, 0.25])
    again = Potential.from_json(json.loads(json.dumps(V.to_json())))
    assert again == V
    assert again.support == 3


@pytest.mark.parametrize(
    "obj",
    [
        {"values": [1.0], "support": 2},
        {"values": [1.0, "a"]},
        {"values": [float("nan")]},
        {"support": 1},
        [1.0, 2.0],
    ],
)
def test_potential_json_rejects_bad_input(obj):
    with pytest.raises(ValueError):
        Potential.from_json(obj)


def test_potential_indexing_and_padding():
    V = Potential([3.0, 4.0])
    assert V(1) == 3.0 and V(2) == 4.0 and V(5) == 0.0
    np.testing.assert_array_equal(V.padded(4), [3.0, 4.0, 0.0, 0.0])
    assert V.faddeev_weight == 3.0 + 2 * 4.0


def test_truncate_reports_discarded_weight():
    V, lost = Potential.truncate([1.0, 0.5, 0.25], 2)
    assert V.support == 2
    assert lost == pytest.approx(3 * 0.25)


@pytest.mark.parametrize("lam,z", [(4.05, -0.8), (4.5, -0.5), (-0.5, 0.5)])
def test_lambda_z_maps_off_band(lam, z):
    p = z_of_lambda(lam)
    assert complex(p.z) == pytest.approx(z, abs=1e-14)
    assert not p.in_band()
    assert complex(lambda_of_z(z).lam) == pytest.approx(lam, abs=1e-14)


@given(angles)
def test_band_points_sit_on_upper_semicircle(theta):
    lam = 2 - 2 * math.cos(theta)
    z = complex(z_of_lambda(lam).z)
    assert abs(abs(z) - 1) < 1e-14
    assert z.imag >= 0
    assert complex(lambda_of_z(z).lam).real == pytest.approx(lam, abs=1e-13)


def test_regular_solution_matches_polynomials():
    V = Potential([0.3, -1.1])
    lam = 1.7
    phi = regular_solution(V, lam, 5)
    assert phi[0] == 0 and phi[1] == 1
    assert phi[2] == pytest.approx(-lam + 2 + 0.3)
    for n in range(1, 6):
        assert regular_polynomial_coeffs(V, n)(lam) == pytest.approx(phi[n], rel=1e-12)
    assert recursion_residual(V, phi, lam) < 1e-13


def test_regular_solution_derivative_matches_finite_difference():
    V = Potential([0.7, -0.4, 1.2])
    lam, h = 1.3, 1e-6
    d = regular_solution_derivative(V, lam, 8)
    fd = (regular_solution(V, lam + h, 8) - regular_solution(V, lam - h, 8)) / (2 * h)
    np.testing.assert_allclose(d, fd, rtol=1e-6, atol=1e-8)


def test_jost_polynomial_of_two_site_fixture():
    V = Potential([-math.sqrt(5), 4 / math.sqrt(5)])
    expected = np.polynomial.polynomial.polyfromroots([-0.5, 0.5, math.sqrt(5)])
    expected = expected / expected[0]
    np.testing.assert_allclose(jost_function(V).f0_coeffs, expected, atol=1e-14)


def test_jost_solution_is_free_beyond_support():
    V = Potential([1.0, 2.0])
    z = 0.3 + 0.2j
    f = jost_solution(V, z, 6)
    for n in range(2, 7):
        assert f[n] == pytest.approx(z**n, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(values, angles)
def test_backward_and_iterative_jost_agree(vals, theta):
    V = Potential(vals)
    z = complex(math.cos(theta), math.sin(theta))
    a = jost_solution(V, z, V.support + 2)
    b = jost_solution_iterative(V, z, V.support + 2)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9 * np.max(np.abs(a)))


@settings(max_examples=40, deadline=None)
@given(values, angles, st.integers(1, 6))
def test_wronskian_identity(vals, theta, n):
    V = Potential(vals)
    z = complex(math.cos(theta), math.sin(theta))
    assert wronskian_identity_residual(V, z, n) < 1e-10


def test_iterative_jost_reports_non_convergence():
    V = Potential([5.0] * 30)
    with pytest.raises(JostIterationError):
        jost_solution_iterative(V, 0.99j, 30, max_iter=3)


def test_bound_state_profile_decays_and_matches_recursion():
    V = Potential([1.25])
    prof = bound_state_profile(V, -0.8, 40)
    np.testing.assert_allclose(prof[1:], (-0.8) ** np.arange(40), rtol=1e-12)
    assert recursion_residual(V, prof, 4.05) < 1e-12


def test_rational_jost_cancels_shared_factors():
    jost = jost_function(Potential([0.5])).as_rational()  # 1 + z/2, zero at -2
    added = jost.with_added_zero(-0.5)
    np.testing.assert_allclose(added.num, [1.0, 2.0])
    np.testing.assert_allclose(added.den, [1.0])
    back = added.with_removed_zero(-0.5)
    np.testing.assert_allclose(back.num, [1.0, 0.5])
    z = np.exp(1j * np.linspace(0.1, 3.0, 7))
    np.testing.assert_allclose(abs(added(z)) ** 2 * 0.25, abs(jost(z)) ** 2, rtol=1e-14)
    assert RationalJost.from_json(added.to_json()).num.tolist() == added.num.tolist()
