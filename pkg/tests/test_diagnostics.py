import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypgauss import diagnostics as D, flow as F, hypgeom as H
from hypgauss.errors import WindowError
from hypgauss.spheregrid import make_grid


def test_linear_rate_reference():
    exact = float(4 / (2 * mp.sinh(1) ** 2))
    assert abs(D.linear_rate(2, 1.0, 1.0, 2) - exact) <= 1e-14
    assert abs(D.linear_rate(2, 1.0, 1.0, 2) - 1.448118) < 1e-5
    assert abs(float(mp.sinh(1) ** 2) - 1.3810978) < 1e-7


@pytest.mark.parametrize("n,alpha,rho", [(1, 0.5, 0.5), (2, 2.0, 1.0), (2, 1.0, 2.0)])
def test_translation_and_volume_modes(n, alpha, rho):
    assert D.linear_rate(n, alpha, rho, 0) == 0.0
    assert D.linear_rate(n, alpha, rho, 1) == 0.0
    assert D.flow_linear_rate(n, alpha, rho, 1) == 0.0
    with pytest.raises(ValueError):
        D.linear_rate(n, alpha, rho, -1)


@settings(max_examples=30, deadline=None)
@given(n=st.sampled_from([1, 2]), alpha=st.floats(1.0, 3.0), rho=st.floats(0.3, 3.0),
       l=st.integers(2, 10))
def test_rate_monotonicity(n, alpha, rho, l):
    assert D.linear_rate(n, alpha, rho, l + 1) > D.linear_rate(n, alpha, rho, l) > 0
    assert D.linear_rate(n, alpha + 0.1, rho, l) > D.linear_rate(n, alpha, rho, l)


def test_rates_coincide_for_curves():
    for alpha in (0.5, 1.0, 2.0):
        for l in (2, 3, 5):
            assert D.flow_linear_rate(1, alpha, 0.7, l) == pytest.approx(
                D.linear_rate(1, alpha, 0.7, l), rel=1e-14)


@pytest.mark.parametrize("n,alpha,rho,l", [(2, 1.0, 1.0, 2), (2, 2.0, 0.5, 3), (1, 0.5, 2.0, 2),
                                           (2, 0.5, 2.0, 4)])
def test_linear_pde_oracle(n, alpha, rho, l):
    assert D.linear_pde_rate(n, alpha, rho, l) == pytest.approx(
        D.linear_rate(n, alpha, rho, l), rel=1e-3)


@pytest.mark.parametrize("n,alpha,rho,l", [(2, 1.0, 1.0, 2), (2, 2.0, 0.5, 3), (1, 0.5, 2.0, 2),
                                           (2, 0.5, 2.0, 2), (1, 2.0, 1.0, 3)])
def test_jacobian_oracle_matches_flow_rate(n, alpha, rho, l):
    assert D.jacobian_rate(n, alpha, rho, l) == pytest.approx(
        D.flow_linear_rate(n, alpha, rho, l), rel=1e-5)


def test_linearized_model():
    m = D.linearized_model(2, 1.0, 1.0, 4)
    assert m.rates[:2] == [0.0, 0.0] and m.rates[2] == D.linear_rate(2, 1.0, 1.0, 2)
    assert '"rates"' in m.to_json()
    assert D.linearized_model(2, 1.0, 1.0, 4, corrected=True).rates[2] > m.rates[2]


def test_fit_decay_synthetic():
    t = np.linspace(0, 4, 81)
    fit = D.fit_decay((t, 0.3 * np.exp(-1.448 * t)))
    assert abs(fit.rate - 1.448) <= 1e-6
    assert fit.window[0] == pytest.approx(2.4)
    with pytest.raises(WindowError):
        D.fit_decay((t, np.exp(-t) - 0.5))
    with pytest.raises(WindowError):
        D.fit_decay((t, np.exp(-t)), window=(10, 11))


def test_centered_difference_second_order():
    t = np.cumsum(np.r_[0, np.linspace(0.01, 0.03, 40)])
    d = D.centered_difference(t, t ** 2)
    assert np.allclose(d, 2 * t[1:-1], atol=1e-12)


@pytest.fixture(scope="module")
def ball_run():
    g = make_grid(2, (16, 32))
    return F.run(H.ball(g, 1.0), F.FlowConfig(t_end=0.2, keep_every=1))


@pytest.fixture(scope="module")
def perturbed_run():
    g = make_grid(2, (24, 48))
    th, _ = g.coords()
    rho = 1 + 0.1 * (3 * np.cos(th) ** 2 - 1) / 2
    return F.run(H.RadialSurface(g, rho), F.FlowConfig(t_end=0.6, keep_every=1))


def test_dissipation_on_ball(ball_run):
    rep = D.dissipation_identity(ball_run.series)
    assert np.abs(rep.lhs).max() <= 1e-10 and np.abs(rep.rhs).max() <= 1e-10


def test_dissipation_perturbed(perturbed_run):
    rep = D.dissipation_identity(perturbed_run.series)
    assert np.all(rep.rhs <= 0)
    assert rep.max_mismatch <= 0.02
    again = D.dissipation_identity(None, states=perturbed_run.states, alpha=1.0)
    assert np.allclose(again.rhs, rep.rhs, rtol=1e-12)
    assert '"max_mismatch"' in rep.to_json()


def test_variational_identities(perturbed_run, ball_run):
    s = perturbed_run.series
    vol = D.variational_identity(s, -1)
    assert np.abs(vol.rhs).max() <= 1e-10 and np.abs(vol.lhs).max() <= 1e-8
    for k in (0, 1):
        assert D.variational_identity(s, k).max_mismatch <= 0.02
    for k in (-1, 0, 1):
        rep = D.variational_identity(ball_run.series, k)
        assert np.abs(rep.rhs).max() <= 1e-10
    with pytest.raises(ValueError):
        D.variational_identity(s, 2)


def test_identities_need_three_rows(ball_run):
    short = F.FunctionalSeries(ball_run.series.rows[:2])
    with pytest.raises(WindowError):
        D.dissipation_identity(short)


def test_ball_closed_forms_and_psi():
    assert D.psi(2, 5.110928) == pytest.approx(35.35461, abs=1e-4)
    for n in (1, 2):
        for rho in (0.3, 1.0, 2.5):
            c = D.ball_closed_forms(n, rho)
            assert D.ball_radius_for_volume(n, c["volume"]) == pytest.approx(rho, rel=1e-13)
            assert D.psi(n, c["volume"]) == pytest.approx(c[f"A{n - 1}"], rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(v=st.floats(1e-6, 1e6))
def test_radius_inversion(v):
    r = D.ball_radius_for_volume(2, v)
    assert D.ball_volume(2, r) == pytest.approx(v, rel=1e-12)


def test_af_verify_ball_and_perturbed():
    g = make_grid(2, (32, 64))
    assert abs(D.af_verify(H.ball(g, 1.0)).gap) <= 1e-8
    th, ph = g.coords()
    surf = H.RadialSurface(g, 1 + 0.05 * np.cos(th) + 0.04 * np.sin(th) ** 2 * np.cos(2 * ph))
    rep = D.af_verify(surf)
    assert rep.gap > 1e-4
    moved = H.recenter(surf, np.array([0.0, 0.6, 0.8]), 0.15)
    assert abs(D.af_verify(moved).gap - rep.gap) <= 1e-5 * rep.psi


def test_af_verify_curve():
    g = make_grid(1, 128)
    assert abs(D.af_verify(H.ball(g, 0.8)).gap) <= 1e-10
    assert D.af_verify(H.RadialSurface(g, 1 + 0.1 * np.cos(2 * g.theta))).gap > 0


def test_ball_distance():
    g = make_grid(2, (24, 48))
    bd = D.ball_distance(H.ball(g, 1.0))
    assert bd.rho_star == pytest.approx(1.0, abs=1e-12) and bd.distance <= 1e-8
    moved = H.recenter(H.ball(g, 1.0), np.array([1.0, 0.0, 0.0]), 0.3)
    assert D.ball_distance(moved).distance <= 1e-3


def test_flow_endpoint_is_near_ball(perturbed_run):
    final = perturbed_run.final.surface
    assert D.ball_distance(final).distance <= perturbed_run.series[-1]["osc"]
