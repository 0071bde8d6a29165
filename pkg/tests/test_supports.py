from __future__ import annotations

import math

import numpy as np
import pytest

from liftrules.supports import (Box, EtaFunction, Intersection, NormBall, Polytope, SupportFamily, bounding_box,
                                contains, dbar_box, dbar_enumerate, dbar_exact, dbar_norm_ball, dbar_symmetric,
                                eta_box_circumscription, eta_intersection, eta_norm_ball, eta_of, sample,
                                sample_ball_boundary, support_from_dict, support_function, support_to_dict)


def test_eta_two_ball_values():
    eta = eta_norm_ball(2, 1.0, 3)
    assert np.allclose(eta.values, [0, 1, math.sqrt(2), math.sqrt(3)])
    assert eta.has_nonincreasing_differences()


def test_eta_extreme_norms():
    assert np.allclose(eta_norm_ball(1, 2.0, 3).values, [0, 2, 2, 2])
    assert np.allclose(eta_norm_ball(math.inf, 1.0, 3).values, [0, 1, 2, 3])


def test_eta_must_start_at_zero():
    with pytest.raises(ValueError):
        EtaFunction(np.array([1.0, 2.0]))


def test_eta_of_dispatch():
    assert eta_of(NormBall(2, 1.0, np.zeros(2))) is not None
    assert eta_of(NormBall(2, 1.0, np.ones(2))) is None
    assert np.allclose(eta_of(Box(-np.ones(2), np.ones(2))).values, [0, 1, 2])
    inter = Intersection((NormBall(1, 1.5, np.zeros(2)), NormBall(math.inf, 1.0, np.zeros(2))))
    assert np.allclose(eta_of(inter).values, eta_intersection([eta_norm_ball(1, 1.5, 2),
                                                              eta_norm_ball(math.inf, 1.0, 2)]).values)


def test_box_circumscription():
    eta = eta_box_circumscription([-1, -3], [2, 1])
    assert np.allclose(eta.values, [0, 3, 5])


def test_bounding_box_of_polytope():
    P = Polytope(np.array([[1, 1], [-1, 0], [0, -1]]), np.array([1.0, 0.0, 0.0]))
    lo, hi = bounding_box(P)
    assert np.allclose(lo, [0, 0]) and np.allclose(hi, [1, 1])


def test_support_function_ball():
    ball = NormBall(2, 2.0, np.array([1.0, 0.0]))
    assert support_function(ball, [3.0, 4.0]) == pytest.approx(3.0 + 10.0, rel=1e-6)


def test_dbar_box_formula():
    assert dbar_box([-1, -1], [1, 1], [0, 0], [0.5, 0.5]) == pytest.approx(1.0 + 1.0)


def test_dbar_symmetric_clipped_at_zero():
    eta = eta_norm_ball(2, 1.0, 2)
    assert dbar_symmetric(eta, [5.0, 5.0]) == 0.0


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0, math.inf])
def test_norm_ball_dbar_matches_sign_enumeration(p):
    rng = np.random.default_rng(int(min(p, 7)))
    ball = NormBall(p, 1.0, np.zeros(3))
    for _ in range(15):
        a, b = rng.uniform(-1, 1, (2, 3))
        zm, zp = np.minimum(a, b), np.maximum(a, b)
        got = float(dbar_norm_ball(ball, zm[None], zp[None])[0])
        assert got == pytest.approx(dbar_enumerate(ball, zm, zp), abs=1e-6)


def test_dbar_exact_polytope():
    P = Polytope(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
    assert dbar_exact(P, [0, 0], [0, 0]) == pytest.approx(2.0, abs=1e-7)


def test_sampling_stays_inside():
    rng = np.random.default_rng(4)
    for s in (NormBall(2, 1.0, np.zeros(3)), NormBall(1, 0.5, np.ones(3)), Box(-np.ones(3), 2 * np.ones(3))):
        pts = sample(s, 500, rng)
        assert np.all(contains(s, pts))


def test_boundary_sampling_on_sphere():
    pts = sample_ball_boundary(3.0, 2.0, 4, 300, np.random.default_rng(5))
    assert np.allclose(np.linalg.norm(pts, 3, axis=1), 2.0)


def test_family_bounds_and_roundtrip():
    fam = SupportFamily([Box([-1, 0], [0, 1]), NormBall(2, 1.0, np.array([2.0, 2.0]))])
    lo, hi = fam.global_bounds
    assert np.allclose(lo, [-1, 0]) and np.allclose(hi, [3, 3])
    for s in fam.subsets:
        again = support_from_dict(support_to_dict(s))
        assert type(again) is type(s) and again.dim == s.dim
