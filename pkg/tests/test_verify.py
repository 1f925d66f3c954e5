import json

import numpy as np
import pytest
from scipy.optimize import minimize

from pqsmooth.compat import PiecewiseQuadMap
from pqsmooth.errors import HypothesisViolation
from pqsmooth.instances import make_four_quadrant_model, make_two_cell_model
from pqsmooth.io import dumps
from pqsmooth.optimize import batched_nelder_mead
from pqsmooth.partition import build_grid_partition
from pqsmooth.quadmap import QuadraticMap2
from pqsmooth.quadrature import integrate_rects, polar_integrand
from pqsmooth.smooth import SmoothedMap
from pqsmooth.verify import (certify_injectivity, collision_radius, convergence_study, feature_w21, fit_rate,
                             injectivity_certificate, jacobian_floor, measure_feature, separation_check,
                             sup_errors, verify_smoothed, w21_error)

I = QuadraticMap2.identity()


def unit_strip(a, eps, profile="quintic"):
    """Two unit cells sharing the edge x1 = 0, y in (0, 1); tube wide enough for eps up to 0.375."""
    P = build_grid_partition([-1, 0, 1], [0, 1])
    g = PiecewiseQuadMap.build(P, [I, I + QuadraticMap2.squared_coordinate(0, a)], m=0.5)
    return SmoothedMap.create(g, eps_edge=eps, profile=profile, shrink=0.75)


def quintic(t):
    """Independent transcription of the quintic smoothstep and its derivatives on [-1, 1]."""
    u = np.clip((t + 1) / 2, 0, 1)
    s = 6 * u**5 - 15 * u**4 + 10 * u**3
    s1 = (30 * u**4 - 60 * u**3 + 30 * u**2) / 2
    s2 = (120 * u**3 - 180 * u**2 + 60 * u) / 4
    return s, s1, s2


def test_zero_mismatch_error_is_exactly_zero():
    S = unit_strip((0.0, 0.0), 0.2)
    w = w21_error(S)
    assert w.total == 0 and w.parts == (0.0, 0.0, 0.0)
    s = sup_errors(S)
    assert (s.eps_hat, s.grad_sampled) == (0.0, 0.0)


def test_strip_w21_against_dense_midpoint_rule():
    a, eps = np.array([1.0, 0.0]), 0.25
    S = unit_strip(a, eps)
    q = feature_w21(S, "edge", 0)
    n = 1_000_000
    y = -eps + (np.arange(n) + 0.5) * (2 * eps / n)
    e0, e1, e2 = quintic(y / eps)
    e1, e2 = e1 / eps, e2 / eps**2
    f = e0 - (y > 0)
    na = np.linalg.norm(a)
    parts = np.array([np.abs(f * y * y), np.abs(e1 * y * y + 2 * y * f), np.abs(e2 * y * y + 4 * y * e1 + 2 * f)])
    oracle = na * parts.sum(axis=1) * (2 * eps / n) * 1.0
    assert np.allclose(q.value, oracle, rtol=1e-4, atol=0)
    assert not q.cap_hit


def test_strip_w21_halves_with_eps():
    a = (1.0, 0.0)
    w = [w21_error(unit_strip(a, eps)).total for eps in (0.25, 0.125)]
    assert abs(w[1] / w[0] - 0.5) <= 0.15 * 0.5


def test_quadrature_is_converged():
    S = unit_strip((0.7, -0.3), 0.2, "flat-exponential")
    q1 = feature_w21(S, "edge", 0)
    q2 = feature_w21(S, "edge", 0, rtol=1e-9)
    assert np.max(np.abs(q1.value - q2.value) / np.abs(q2.value)) < 1e-6
    g = make_four_quadrant_model(I, (0.1, 0), (0, 0.1), m=0.4)
    V = SmoothedMap.create(g, eps_vertex=0.1)
    v1, v2 = feature_w21(V, "vertex", 0), feature_w21(V, "vertex", 0, rtol=1e-9)
    assert np.max(np.abs(v1.value - v2.value) / np.abs(v2.value)) < 1e-6


def test_gauss_rule_integrates_kinks_and_polar_area():
    f = lambda X: np.abs(X[:, 0] - 0.3)[:, None]
    r = integrate_rects(f, [(0, 1, 0, 2)])
    assert r.value[0] == pytest.approx(2 * (0.3**2 + 0.7**2) / 2, rel=1e-6) and not r.cap_hit
    tight = integrate_rects(f, [(0, 1, 0, 2)], rtol=1e-11)
    assert abs(tight.value[0] - 0.58) < abs(r.value[0] - 0.58)
    if abs(tight.value[0] - 0.58) > 1e-11 * 0.58:
        assert tight.cap_hit
    one = lambda X: np.ones((len(X), 1))
    disk = integrate_rects(polar_integrand(one), [(0, 1, 0, 2 * np.pi)])
    assert disk.value[0] == pytest.approx(np.pi, rel=1e-12)


def test_strip_sup_bounds():
    S = unit_strip((3.0, -1.0), 0.1)
    s = sup_errors(S)
    assert s.eps_hat == pytest.approx(0.01 * np.sqrt(10), rel=1e-14)
    assert s.value_sampled <= s.eps_hat
    t = sup_errors(unit_strip((3.0, -1.0), 0.05))
    assert t.eps_hat == pytest.approx(s.eps_hat / 4, rel=1e-14)
    assert 0.4 <= t.grad_sampled / s.grad_sampled <= 0.6


def test_disk_sup_bound_dominates_samples(four_quadrant):
    for eps in (0.1, 0.05, 0.02):
        S = SmoothedMap.create(four_quadrant, eps_vertex=eps)
        s = sup_errors(S)
        assert s.value_sampled <= s.eps_hat == pytest.approx(0.5 * four_quadrant.vertex_mismatch[0].C * eps**2)


def test_collision_radius():
    assert collision_radius(0.01, 0.5) == pytest.approx(0.04, abs=1e-17)
    with pytest.raises(ValueError):
        collision_radius(0.01, 0.0)


def test_identity_certificate_is_trivial():
    P = build_grid_partition([0, 1, 2], [0, 1])
    g = PiecewiseQuadMap.build(P, [I, I], m=1.0)
    cert = injectivity_certificate(SmoothedMap.create(g), n_pairs=1000)
    assert cert.collision_radius == 0 and cert.passed


def test_wrong_m_is_a_hypothesis_violation():
    P = build_grid_partition([0, 1, 2], [0, 1])
    g = PiecewiseQuadMap.build(P, [I, I], m=5.0)
    with pytest.raises(HypothesisViolation):
        separation_check(g.value, P.bounds, 5.0, 0.0, n_pairs=1000)


def test_accepted_map_passes_collision_search(four_quadrant):
    S = SmoothedMap.create(four_quadrant, eps_edge=0.01, eps_vertex=0.05)
    cert = injectivity_certificate(S, n_pairs=20_000)
    assert cert.passed and cert.search.min_ratio >= 0.5 * four_quadrant.m
    assert cert.separation.min_slack >= -1e-12


def test_planted_collision_is_found():
    P = build_grid_partition([-1, 0, 1], [-1, 0, 1])
    # the NW cell is translated onto the NE cell, so x and x + (1, 0) share an image
    shifted = QuadraticMap2.affine(np.eye(2), (1.0, 0.0))
    h = lambda X: np.where((P.locate(X) == 2)[:, None], shifted.value(X), X)
    regions = [(-1, 0, 0, 1)]
    cert = certify_injectivity(h, P.bounds, regions, m=0.4, eps_hat=1.0, n_pairs=2000)
    assert not cert.passed and cert.search.witness is not None
    x, y = map(np.array, cert.search.witness)
    assert np.linalg.norm(h(np.stack([x, y]))[0] - h(np.stack([x, y]))[1]) <= 1e-8 * np.linalg.norm(x - y) + 1e-12


def test_jacobian_floor_identity_and_bulk():
    P = build_grid_partition([0, 1, 2], [0, 1])
    assert jacobian_floor(SmoothedMap.create(PiecewiseQuadMap.build(P, [I, I], m=1.0))).floor == 1.0
    P = build_grid_partition([-1, 0], [-1, 0])
    g = PiecewiseQuadMap.build(P, [QuadraticMap2([[0.1, 0, 0, 1, 0, 0], [0, 0, 0, 0, 1, 0]])], m=0.5)
    assert jacobian_floor(SmoothedMap.create(g)).floor == pytest.approx(0.8, abs=1e-15)


def test_blend_floor_against_denser_grid(four_quadrant):
    S = SmoothedMap.create(four_quadrant, eps_edge=0.02, eps_vertex=0.08)
    res = jacobian_floor(S)
    assert res.ok and res.floor >= 0.5 * four_quadrant.lam
    dense = jacobian_floor(S, n=320)  # ten times the samples per feature
    for a, b in zip(res.features, dense.features):
        assert a.floor <= b.sampled_min + 1e-12
        assert abs(a.sampled_min - b.sampled_min) <= 1e-3


def test_fit_rate_recovers_power_law():
    eps = [2.0**-k for k in range(3, 8)]
    fit = fit_rate(eps, [5 * e**1.5 for e in eps])
    assert fit.slope == pytest.approx(1.5, abs=1e-12) and fit.residual < 1e-12
    assert fit_rate(eps, [0.0] * 5) is None
    with pytest.raises(ValueError):
        fit_rate(eps[:3], [1, 2, 3])


def test_convergence_study_strip(strip_model):
    study = convergence_study(strip_model, ("edge", 0), [2.0**-k for k in range(3, 8)], "quintic")
    assert 0.9 <= study.fits["w21_total"].slope <= 1.1
    assert 0.9 <= study.fits["sup_grad"].slope <= 1.1
    assert 1.8 <= study.fits["sup_val"].slope <= 2.2


def test_convergence_study_zero_feature():
    g = make_two_cell_model(I, (0.0, 0.0), m=1.0)
    study = convergence_study(g, ("edge", 0), [2.0**-k for k in range(3, 8)])
    assert study.identically_zero and all(v is None for v in study.fits.values())


def test_convergence_study_input_checks(strip_model):
    with pytest.raises(ValueError):
        convergence_study(strip_model, ("edge", 0), [0.1, 0.06, 0.03, 0.015])
    with pytest.raises(ValueError):
        convergence_study(strip_model, ("edge", 0), [0.4, 0.2, 0.1, 0.05])
    with pytest.raises(ValueError):
        convergence_study(strip_model, ("edge", 0), [0.1, 0.05, 0.025])


def test_report_round_trips_through_json(four_quadrant):
    S = SmoothedMap.create(four_quadrant, eps_edge=0.01, eps_vertex=0.05)
    rep = verify_smoothed(S, n_pairs=5000)
    d = rep.to_dict()
    assert json.loads(dumps(d)) == json.loads(dumps(json.loads(dumps(d))))
    assert d["w21_error"] == pytest.approx(sum(d["w21_parts"]))
    assert d["m_estimate_label"] == "non-certified"


def test_measure_feature_unsmoothed_is_zero(four_quadrant):
    f = measure_feature(SmoothedMap.create(four_quadrant), "vertex", 0)
    assert f.w21 == 0 and f.sup_grad_sampled == 0


def test_batched_nelder_mead_matches_scipy():
    def rosen(Z):
        return 100 * (Z[:, 1] - Z[:, 0] ** 2) ** 2 + (1 - Z[:, 0]) ** 2

    starts = np.array([[-1.2, 1.0], [0.0, 0.0], [2.0, 2.0]])
    res = batched_nelder_mead(rosen, starts, 0.1, maxiter=2000, xatol=1e-10, fatol=1e-16)
    for k, x0 in enumerate(starts):
        ref = minimize(lambda z: rosen(z[None])[0], x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-16, "maxiter": 4000})
        assert np.allclose(res.x[k], ref.x, atol=1e-6) and np.allclose(res.x[k], [1, 1], atol=1e-6)
