import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cml_stability.charroots import rightmost_root
from cml_stability.dde_sim import (
    Constant,
    PerturbedEquilibrium,
    Sampled,
    certify_boundedness,
    certify_positivity,
    classify_asymptotics,
    default_step,
    history_function,
    integrate,
    linear_rate,
    load_history_csv,
    random_history,
    step_rhs,
    write_trajectory_csv,
)
from cml_stability.hayes import find_stability_switch, omega0
from cml_stability.model import DomainError, Parameters, derive_k, equilibria, reduced_coeffs

BAND = Parameters(1.77, 3.0, 0.05, 0.2, 1.5)
STEEP = Parameters(2.0, 10.0, 1.0, 0.5, 0.2)


def test_rhs_examples():
    p = BAND
    x2 = equilibria(p).x2
    assert step_rhs(p, 0.0, 0.0) == 0.0
    assert step_rhs(p, x2, x2) == pytest.approx(0.0, abs=1e-14)
    assert step_rhs(p, 0.0, 0.3) > 0


def test_rhs_negative_state_with_fractional_exponent_is_nan():
    p = Parameters(1.0, 2.5, 0.5, 0.5, 1.0)
    assert math.isnan(step_rhs(p, -0.1, 0.2))
    assert math.isfinite(step_rhs(p.replace(n=2.0), -0.1, 0.2))


def test_zero_history_stays_zero():
    traj = integrate(BAND, Constant(0.0), 10 * BAND.r)
    assert np.all(traj.values == 0.0)
    assert traj.positivity.passed and traj.positivity.minimum == 0.0
    assert traj.boundedness.passed


@pytest.mark.parametrize("params", [BAND, STEEP, Parameters(3.0, 2.0, 1.0, 0.5, 0.5)])
def test_equilibria_are_fixed_points(params):
    x2 = equilibria(params).x2
    t_end = 50 * params.r
    traj = integrate(params, Constant(x2), t_end)
    assert np.max(np.abs(traj.values - x2)) <= 1e-10
    rep = classify_asymptotics(traj)
    assert rep.verdict == "ConvergedTo" and rep.equilibrium == "x2" and rep.final_gap <= 1e-12


def test_step_alignment_is_enforced():
    with pytest.raises(ValueError, match=r"nearest admissible h is 0\.03658"):
        integrate(BAND, Constant(1.0), 3.0, h=0.037)
    traj = integrate(BAND, Constant(1.0), 3.0, h=BAND.r / 40)
    assert traj.delay_steps == 40
    with pytest.raises(ValueError, match="at least the delay"):
        integrate(BAND, Constant(1.0), 1.0)
    with pytest.raises(DomainError):
        integrate(BAND.replace(r=0.0), Constant(1.0), 1.0)


def test_default_step_divides_delay():
    for p in (BAND, STEEP, Parameters(5.0, 4.0, 0.1, 0.1, 7.3)):
        h = default_step(p)
        assert abs(p.r / h - round(p.r / h)) < 1e-9 and p.r / h >= 32


def test_dense_output_matches_nodes_and_slopes():
    traj = integrate(BAND, random_history(np.random.default_rng(3), BAND.r), 6 * BAND.r)
    assert np.allclose(traj(traj.nodes), traj.values, rtol=0, atol=1e-15)
    eps = 1e-7
    t = traj.nodes[1:-1]
    left = (traj(t) - traj(t - eps)) / eps
    right = (traj(t + eps) - traj(t)) / eps
    scale = 1 + np.abs(traj.derivs[1:-1])
    assert np.max(np.abs(left - traj.derivs[1:-1]) / scale) < 1e-5
    assert np.max(np.abs(right - traj.derivs[1:-1]) / scale) < 1e-5
    # before zero the dense output is the history itself
    s = np.linspace(-BAND.r, -1e-9, 7)
    assert np.array_equal(traj(s), history_function(traj.history, BAND)(s))
    with pytest.raises(DomainError):
        traj(np.array([traj.t_end + 1.0]))


def test_hermite_coefficients_reproduce_dense_output():
    traj = integrate(STEEP, Constant(0.5), 3 * STEEP.r)
    c = traj.hermite_coefficients()
    s = 0.3 * traj.step
    poly = c[:, 0] + s * (c[:, 1] + s * (c[:, 2] + s * c[:, 3]))
    assert np.allclose(poly, traj(traj.nodes[:-1] + s), rtol=0, atol=1e-14)


def test_integrator_order():
    p = Parameters(1.77, 3.0, 0.05, 0.2, 1.0)
    phi = Sampled((-1.0, -0.5, 0.0), (0.4, 1.2, 0.8))
    ref = integrate(p, phi, p.r, h=p.r / 64)

    def dev(m):
        tr = integrate(p, phi, p.r, h=p.r / m)
        return np.max(np.abs(tr.values - ref(tr.nodes)))

    e4, e8 = dev(4), dev(8)
    assert 8 <= e4 / e8 <= 32


def test_perturbed_equilibrium_in_stable_band_converges():
    # the stable band lies below the first zero of g
    r_star = find_stability_switch(BAND, 0.2, 3.0)
    assert BAND.r < r_star
    traj = integrate(BAND, PerturbedEquilibrium("x2", 0.01), 60 * BAND.r)
    rep = classify_asymptotics(traj)
    assert rep.verdict == "ConvergedTo" and rep.equilibrium == "x2"
    assert rep.transient_cut == pytest.approx(30 * BAND.r)


def test_post_hopf_oscillation_period():
    r_star = find_stability_switch(STEEP, 0.05, 0.4)
    p = STEEP.replace(r=1.05 * r_star)
    rc = reduced_coeffs(p.replace(r=r_star), "x2")
    period = 2 * math.pi / omega0(rc.p, r_star)
    traj = integrate(p, PerturbedEquilibrium("x2", 1e-3), 300 * p.r)
    rep = classify_asymptotics(traj)
    assert rep.verdict == "SustainedOscillation"
    assert rep.period == pytest.approx(period, rel=0.15)


def test_linear_rate_matches_rightmost_root():
    for params in (BAND, Parameters(3.0, 2.0, 1.0, 0.5, 0.5), Parameters(2.0, 10.0, 1.0, 0.5, 0.25)):
        rc = reduced_coeffs(params, "x2")
        mu = rightmost_root(rc.p, rc.q, params.r).mu
        x2 = equilibria(params).x2
        r = params.r
        h = r / max(64, math.ceil(40 * r))
        traj = integrate(params, PerturbedEquilibrium("x2", 1e-4), 16 * r, h=h)
        assert linear_rate(traj, x2, 5 * r, 15 * r) == pytest.approx(mu, rel=0.10)


def test_blowup_truncates_trajectory():
    # a negative state with fractional exponent has no real right-hand side
    p = Parameters(1.0, 2.5, 0.5, 0.5, 1.0)
    traj = integrate(p, PerturbedEquilibrium("x1", -0.1), 5.0)
    assert traj.failed and len(traj.nodes) < 5.0 / traj.step
    assert traj.positivity is None


def test_positivity_refuses_negative_history():
    p = Parameters(1.0, 2.0, 0.5, 0.5, 1.0)
    traj = integrate(p, Sampled((-1.0, 0.0), (-0.2, 0.5)), 2.0)
    assert traj.positivity is None
    with pytest.raises(ValueError):
        certify_positivity(traj)


def test_boundedness_at_equilibrium_by_hand():
    traj = integrate(BAND, Constant(equilibria(BAND).x2), 20 * BAND.r)
    cert = traj.boundedness
    kb = derive_k(BAND) * BAND.beta0
    assert cert.epsilon == pytest.approx(BAND.delta / kb)
    assert cert.eta == pytest.approx(BAND.delta)
    x2 = equilibria(BAND).x2
    t = traj.nodes
    assert np.all(x2 ** 2 <= x2 ** 2 * np.exp(-cert.eta * t) + kb / (cert.epsilon * cert.eta))
    assert cert.passed


def test_boundedness_needs_positive_eta():
    traj = integrate(BAND, Constant(0.5), 2 * BAND.r)
    kb = derive_k(BAND) * BAND.beta0
    with pytest.raises(DomainError):
        certify_boundedness(traj, epsilon=2 * BAND.delta / kb)
    assert certify_boundedness(traj, epsilon=0.5 * BAND.delta / kb).passed


admissible = st.builds(
    Parameters,
    beta0=st.floats(0.2, 4),
    n=st.floats(0.5, 8),
    delta=st.floats(0.05, 2),
    gamma=st.floats(0.05, 1),
    r=st.floats(0.2, 4),
)


@settings(max_examples=25, deadline=None)
@given(admissible, st.integers(0, 2 ** 32 - 1))
def test_certificates_hold_on_random_runs(params, seed):
    phi = random_history(np.random.default_rng(seed), params.r, scale=2.0)
    traj = integrate(params, phi, 20 * params.r)
    assert not traj.failed
    assert traj.positivity.passed, traj.positivity
    if params.n >= 2:
        assert traj.boundedness.passed, traj.boundedness
    else:
        assert traj.boundedness is None


def test_boundedness_not_applicable_below_n_two():
    p = Parameters(2.0, 0.5, 0.25, 0.0625, 1.0)
    phi = random_history(np.random.default_rng(0), p.r, scale=2.0)
    traj = integrate(p, phi, 20.0)
    assert traj.boundedness is None and traj.positivity.passed
    with pytest.raises(DomainError, match="n >= 2"):
        certify_boundedness(traj)
    # the bound itself is exceeded here, so refusing is the honest answer
    kb = derive_k(p) * p.beta0
    eps = p.delta / kb
    bound = traj.values[0] ** 2 * np.exp(-p.delta * traj.nodes) + kb / (eps * p.delta)
    assert np.max(traj.values ** 2 - bound) > 1.0


def test_sampled_history_validation():
    with pytest.raises(ValueError):
        Sampled((0.0, -1.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        Sampled((-1.0,), (1.0,))
    with pytest.raises(DomainError):
        integrate(BAND, Sampled((-0.5, 0.0), (1.0, 1.0)), 3.0)


def test_csv_round_trip(tmp_path):
    traj = integrate(BAND, Constant(1.0), 2 * BAND.r)
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,x" and len(lines) == len(traj.nodes) + 1
    assert float(lines[-1].split(",")[1]) == traj.values[-1]
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path, dt=0.25)
    t, x = traj.resample(0.25)
    text = path.read_text().splitlines()
    assert len(text) == len(t) + 1

    hist = tmp_path / "hist.csv"
    hist.write_text("s,x\n-1.5,0.2\n-0.75,0.9\n0,0.4\n")
    phi = load_history_csv(hist)
    assert phi.times == (-1.5, -0.75, 0.0) and phi.values == (0.2, 0.9, 0.4)


def test_random_history_bounds():
    rng = np.random.default_rng(0)
    for _ in range(20):
        phi = random_history(rng, 2.0, scale=0.7)
        assert min(phi.values) >= 0 and max(phi.values) <= 0.7
        assert phi.times[0] == -2.0 and phi.times[-1] == 0.0
