import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fig2_params, s2_params
from tcqpt.analytic import gain_balanced_order, hermitian_order
from tcqpt.model import ModelParams, critical_coupling, impose_regime, residual_drive
from tcqpt.steady import (MeanFieldState, NoRootError, NotARootError, ParameterPath, Reduced,
                          classify, continue_branch, find_all, flow, flow_jacobian, residual,
                          solve_from, third_equation, trivial_state)

finite = st.floats(-2.0, 2.0)
pos = st.floats(0.5, 10.0)
rate = st.floats(0.0, 3.0)


@st.composite
def models(draw):
    return ModelParams(delta_c=draw(pos), delta_s=draw(pos), lam=draw(st.floats(0.0, 15.0)),
                       omega_a=complex(draw(finite), draw(finite)),
                       omega_j=complex(draw(finite), draw(finite)),
                       kappa_c=draw(rate), kappa_g=draw(rate),
                       gamma_perp=draw(rate), gamma_par=draw(rate))


@st.composite
def states(draw):
    return MeanFieldState(complex(draw(finite), draw(finite)),
                          complex(draw(finite), draw(finite)), draw(st.floats(-1.0, 1.0)))


def state_from_order(o) -> MeanFieldState:
    return MeanFieldState(o.a_mean, o.jm, o.jz)


def cubic_roots(p: ModelParams):
    """Independent enumeration: eliminate jm as well, leaving a cubic in jz."""
    D0 = complex(p.delta_s, -p.gamma_perp)
    D1 = p.lam ** 2 / complex(p.delta_c, -p.kappa)
    R = residual_drive(p)
    # gamma_par (1 + z) |D0 + z D1|^2 + 4 gamma_perp |R|^2 z = 0
    q0, q1, q2 = abs(D0) ** 2, 2 * (D0 * D1.conjugate()).real, abs(D1) ** 2
    g = p.gamma_par
    coeffs = [g * q2, g * (q1 + q2), g * (q0 + q1) + 4 * p.gamma_perp * abs(R) ** 2, g * q0]
    zs = [z.real for z in np.roots(coeffs) if abs(z.imag) < 1e-9 and -1 - 1e-9 <= z.real <= 1 + 1e-9]
    return sorted(zs)


# -- residual ----------------------------------------------------------------


@pytest.mark.parametrize("regime", ["lossy", "gain_balanced"])
def test_trivial_state_is_root_under_matching(regime):
    p = fig2_params(1.4, regime)
    assert np.abs(residual(p, trivial_state(p))).max() < 1e-14


def test_analytic_states_are_roots():
    p = fig2_params(1.2)
    assert np.abs(residual(p, state_from_order(gain_balanced_order(p)))).max() < 1e-13
    h = fig2_params(1.5, "hermitian")
    assert np.abs(residual(h, state_from_order(hermitian_order(h)))).max() < 1e-13


@settings(max_examples=200, deadline=None)
@given(p=models(), s=states())
def test_third_equation_is_real(p, s):
    v = third_equation(p, s)
    assert abs(v.imag) <= 1e-14 * max(1.0, abs(v))


@settings(max_examples=200, deadline=None)
@given(p=models(), s=states())
def test_conjugation_symmetry(p, s):
    # conjugating all fields and drive phases conjugates the residuals (the
    # inversion residual flips sign); damping terms carry -i and break this,
    # so the rates are switched off
    p = p.replace(kappa_c=0.0, kappa_g=0.0, gamma_perp=0.0, gamma_par=0.0)
    pc = p.replace(omega_a=p.omega_a.conjugate(), omega_j=p.omega_j.conjugate())
    r, rc = residual(p, s), residual(pc, s.conjugate())
    assert np.allclose(rc, r * np.array([1, -1, 1, -1, -1]), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(p=models(), s=states())
def test_residual_is_i_times_flow(p, s):
    r = residual(p, s)
    f = flow(p, s.to_array())
    da, dm = complex(f[0], f[1]), complex(f[2], f[3])
    assert np.allclose([r[0] + 1j * r[1], r[2] + 1j * r[3]], [1j * da, 1j * dm], atol=1e-12)
    assert r[4] == pytest.approx(f[4], abs=1e-12)


def _fd(fn, x, h=1e-6):
    cols = []
    for j in range(len(x)):
        e = np.zeros(len(x))
        e[j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.column_stack(cols)


@settings(max_examples=50, deadline=None)
@given(p=models(), s=states())
def test_jacobians_match_finite_differences(p, s):
    y = s.to_array()
    assert np.allclose(flow_jacobian(p, y), _fd(lambda v: flow(p, v), y), atol=1e-6)
    red = Reduced(p)
    x = y[2:]
    assert np.allclose(red.evaluate(x)[1], _fd(lambda v: red.evaluate(v)[0], x), atol=1e-6)


# -- solve_from --------------------------------------------------------------


def test_solve_from_trivial_is_stationary():
    p = fig2_params(0.8)
    sol = solve_from(p, trivial_state(p))
    assert sol.state == trivial_state(p)
    assert sol.residual_norm < 1e-11


def test_solve_from_matches_gain_balanced_order():
    p = fig2_params(1.2)
    o = gain_balanced_order(p)
    start = MeanFieldState(o.a_mean + 1e-3, o.jm + 1e-3j, o.jz + 1e-3)
    sol = solve_from(p, start)
    assert sol.state.distance(state_from_order(o)) < 1e-9
    assert sol.state.jm.imag == 0 and sol.state.jm.real > 0


@settings(max_examples=50, deadline=None)
@given(dc=pos, ds=pos, gp=st.floats(0.1, 3.0), gz=st.floats(0.01, 3.0), x=st.floats(1.05, 3.0),
       phase=st.floats(0, 2 * math.pi))
def test_gain_balanced_roots_random(dc, ds, gp, gz, x, phase):
    base = ModelParams(delta_c=dc, delta_s=ds, lam=1.0, omega_a=1.0, kappa_c=0.5,
                       gamma_perp=gp, gamma_par=gz)
    lam = x * critical_coupling(base, "gain_balanced")
    p = impose_regime(base.replace(lam=lam), "gain_balanced")
    o = gain_balanced_order(p)
    m0 = o.jm * (1 + 0.01 * complex(math.cos(phase), math.sin(phase)))
    sol = solve_from(p, MeanFieldState(0j, m0, o.jz + 1e-3))
    assert sol.state.distance(state_from_order(o)) <= 1e-9


def test_solve_from_errors():
    p = s2_params(0.45, 0.77)
    with pytest.raises(ValueError):
        solve_from(p, MeanFieldState(complex("nan"), 0j, 0.0))
    with pytest.raises(NoRootError) as info:
        solve_from(p, MeanFieldState(0j, 50 + 0j, 0.3), max_iter=3)
    assert isinstance(info.value.last, MeanFieldState)


def test_lossy_matching_only_trivial():
    p = fig2_params(1.6, "lossy").replace(kappa_g=0.0)
    p = impose_regime(p, "lossy")
    roots = find_all(p)
    assert len(roots) == 1
    assert roots[0].state.distance(trivial_state(p)) < 1e-12


# -- classify ----------------------------------------------------------------


def test_classify_examples():
    # passive cavity under drive matching: the trivial root contracts
    p = fig2_params(1.4, "lossy")
    verdict, eig = classify(p, trivial_state(p))
    assert verdict == "stable" and len(eig) == 5
    herm = fig2_params(1.5, "hermitian")
    for r in find_all(herm):
        assert r.stability == "marginal"
    assert classify(herm, trivial_state(herm))[0] == "marginal"
    with pytest.raises(NotARootError):
        classify(p, MeanFieldState(0j, 0.5 + 0j, 0.0))


@pytest.mark.xfail(strict=True, reason="gain-balanced normal-phase trivial root has a neutral "
                   "(delta_s == delta_c) or growing (delta_s != delta_c) cavity-spin mode")
@pytest.mark.parametrize("scale", [1.0, 0.9, 1.1])
def test_classify_gain_balanced_normal_phase_trivial_stable(scale):
    p = fig2_params(0.8, delta_s_scale=scale)
    assert classify(p, trivial_state(p))[0] == "stable"


@pytest.mark.parametrize("scale", [0.5, 0.9, 1.1, 2.0])
def test_gain_balanced_trivial_unstable_for_unequal_detunings(scale):
    p = fig2_params(0.8, delta_s_scale=scale)
    assert classify(p, trivial_state(p))[0] == "unstable"


def test_classify_equal_detunings_trivial_is_neutral():
    # delta_s == delta_c at gain balance: trivial-root spectrum sits on the
    # imaginary axis apart from -gamma_par
    p = fig2_params(0.8)
    verdict, eig = classify(p, trivial_state(p))
    assert verdict == "marginal"
    assert max(e.real for e in eig) == pytest.approx(0.0, abs=1e-9)


def test_classify_bistable_middle_unstable():
    roots = find_all(s2_params(0.45, 0.77))
    assert [r.stability for r in roots] == ["stable", "unstable", "stable"]


def test_symmetry_modes_excluded_on_broken_branch():
    sol = [r for r in find_all(fig2_params(1.2)) if abs(r.state.jm) > 0][0]
    assert sol.stability == "stable" and sol.symmetry_modes >= 1
    assert min(abs(e) for e in sol.eigenvalues) < 1e-6


# -- find_all ----------------------------------------------------------------


def test_find_all_gain_balanced_two_roots():
    roots = find_all(fig2_params(1.3), (10, 10, 10))
    assert len(roots) == 2
    assert [r.branch_id for r in roots] == [0, 1]
    assert roots[0].state.jz == -1.0


@settings(max_examples=25, deadline=None)
@given(x=st.floats(0.2, 2.5), f=st.floats(0.5, 1.5), ds=st.floats(0.7, 1.3),
       gz=st.floats(0.05, 1.0))
def test_find_all_matches_cubic_oracle(x, f, ds, gz):
    p = s2_params(x, f).replace(delta_s=8.0 * x * ds, gamma_par=gz)
    p = impose_regime(p, "lossy", f)
    expected = cubic_roots(p)
    got = sorted(r.state.jz for r in find_all(p, (6, 6, 6)))
    assert len(got) == len(expected)
    assert np.allclose(got, expected, atol=1e-7)


def test_find_all_deduplicates_and_respects_distance():
    roots = find_all(s2_params(0.45, 0.77), (10, 10, 10))
    for i, a in enumerate(roots):
        for b in roots[i + 1:]:
            assert a.state.distance(b.state) > 1e-7


# -- continuation ------------------------------------------------------------


def test_zero_length_path_returns_seed():
    p = s2_params(0.5, 0.77)
    seed = find_all(p)[0]
    br = continue_branch(ParameterPath("x", lambda t: s2_params(t, 0.77), 0.5, 0.5), seed)
    assert len(br.points) == 1 and br.points[0].solution == seed


def test_continue_gain_balanced_branch_follows_closed_form():
    build = lambda t: fig2_params(t)
    start = 2.0
    seed = max(find_all(build(start)), key=lambda s: abs(s.state.jm))
    br = continue_branch(ParameterPath("ratio", build, start, 1.05), seed)
    assert not br.stalled and br.points[-1].value == pytest.approx(1.05)
    for pt in br.points:
        lc = critical_coupling(build(pt.value), "gain_balanced")
        assert pt.solution.state.jz == pytest.approx(-(lc / 8.0) ** 2, abs=1e-9)


def test_continue_s_curve_has_two_folds():
    build = lambda t: s2_params(t, 0.77)
    seed = find_all(build(1.0))[0]
    br = continue_branch(ParameterPath("x", build, 1.0, 0.2), seed, max_step=0.01)
    assert not br.stalled
    assert len(br.folds) == 2
    folds = sorted(p.value for p in br.folds)
    assert folds[0] == pytest.approx(0.300, abs=0.01)
    assert folds[1] == pytest.approx(0.625, abs=0.01)
    stab = [p.solution.stability for p in br.points]
    assert "unstable" in stab
    assert br.points[-1].value == pytest.approx(0.2)
