import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnls.diagnostics import (
    CONST_WEIGHT,
    CSV_HEADER,
    POWER_WEIGHT,
    DiagnosticsRecord,
    FitError,
    MorawetzWeightSpec,
    SpacetimeNormSpec,
    UsageError,
    blowup_B,
    blowup_B_direct,
    energy,
    energy_parts,
    fit_decay,
    fit_power_law,
    mass,
    morawetz_accumulate,
    pseudo_conformal_P,
    read_csv,
    snapshot,
    spacetime_norm,
    theta,
    theta_integral,
    variance_J,
    virial_rate,
    virial_y,
    write_csv,
)
from qnls.grid import FieldState, RadialGrid
from qnls.model import InitialDataSpec, NonlinearitySpec, PotentialSpec, ProblemSpec

PI32 = math.pi**1.5


def gaussian_state(A=1.0, beta=0.0, M=8192, R=16.0):
    g = RadialGrid(3, R, M)
    u = InitialDataSpec(amplitude=A, chirp=beta).evaluate(g.r)
    return FieldState(g, 0.0, u)


@pytest.mark.parametrize("A, beta", [(1.0, 0.0), (0.7, 0.25), (1.3, -0.4)])
def test_gaussian_moments(A, beta):
    s = gaussian_state(A, beta)
    J = 1.5 * PI32 * A**2
    assert mass(s) ** 2 == pytest.approx(A**2 * PI32, rel=1e-7)
    assert variance_J(s) == pytest.approx(J, rel=1e-7)
    # y = 2β J for a chirped Gaussian
    assert virial_y(s) == pytest.approx(2 * beta * J, rel=1e-5, abs=1e-9)
    spec = ProblemSpec()
    gu, gh, pot = energy_parts(s, spec)
    assert gu == pytest.approx((1 + 4 * beta**2) * J, rel=1e-5)
    assert gh == 0.0 and pot == 0.0


def test_quasilinear_and_potential_terms():
    s = gaussian_state(1.0)
    spec = ProblemSpec(h=NonlinearitySpec.power(0.5), V=PotentialSpec(c=1.0, m=1.0, sign=-1, epsilon=1e-3))
    gu, gh, pot = energy_parts(s, spec)
    # h(|u|²) = |u| = e^{-r²/2}, so ∫|∇h|² = ∫|∇u|²
    assert gh == pytest.approx(1.5 * PI32, rel=1e-5)
    # ∫ -|x|^{-1} e^{-r²} dx = -2π
    assert pot == pytest.approx(-2 * math.pi, rel=1e-5)
    assert energy(s, spec) == pytest.approx(0.5 * (gu + gh) - 0.5 * pot)


def test_theta_forms_agree_for_real_profiles():
    s = gaussian_state(0.8, M=4096)
    spec = ProblemSpec(h=NonlinearitySpec.power(0.75), V=PotentialSpec(c=1.0, m=1.0, sign=-1))
    # equal in the continuum; the two gradients differ only at O(dr²)
    assert theta(s, spec, "direct") == pytest.approx(theta(s, spec, "rho"), rel=1e-4)
    assert virial_rate(s, spec, "direct") == pytest.approx(virial_rate(s, spec, "rho"), rel=1e-4)


def test_theta_forms_differ_with_chirp():
    s = gaussian_state(0.8, beta=0.5, M=4096)
    spec = ProblemSpec(h=NonlinearitySpec.power(0.75))
    # ρ|∇u|² picks up the phase gradient, |∇ρ|²/4 does not
    assert abs(theta(s, spec, "direct") - theta(s, spec, "rho")) > 1e-2
    with pytest.raises(ValueError):
        theta(s, spec, "other")


def test_theta_linear_inverse_square_vanishes():
    # 2V + x·∇V = 0 for V = -r^-2 outside the core
    s = gaussian_state(1.0, M=4096)
    spec = ProblemSpec(V=PotentialSpec(c=1.0, m=2.0, sign=-1, epsilon=1e-6))
    assert abs(theta(s, spec)) < 1e-5


def test_blowup_B_expansion_matches_operator_form():
    s = gaussian_state(1.0, beta=0.3, M=8192)
    spec = ProblemSpec(V=PotentialSpec(c=1.0, m=2.0, sign=1, epsilon=0.05))
    a = blowup_B(s, spec, T=0.7)
    b = blowup_B_direct(s, spec, T=0.7)
    assert a == pytest.approx(b, rel=1e-4)
    with pytest.raises(ValueError):
        blowup_B(s, spec, T=0.0)


def test_pseudo_conformal_needs_context():
    s = gaussian_state(M=256)
    with pytest.raises(UsageError):
        pseudo_conformal_P(s, ProblemSpec())
    P, res = pseudo_conformal_P(s, ProblemSpec(), energy0=1.0, J0=variance_J(s), theta_integral=0.0)
    assert P == pytest.approx(variance_J(s)) and res == pytest.approx(0.0)


def _rec(t, decay=1.0, dens=None, lr=None):
    r = DiagnosticsRecord(t=t, mass2=1.0, grad_u2=1.0, grad_h2=decay, pot_term=0.0, abs_pot_term=0.0,
                          abs_pot_core=0.0, energy=1.0, J=1.0, y=0.0, theta=0.0, theta_rho=0.0,
                          dy_direct=0.0, dy_rho=0.0)
    if dens is not None:
        r.morawetz_density[POWER_WEIGHT.label] = dens
    if lr is not None:
        r.lr_integrals[4.0] = lr
    return r


@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(0.0, 5.0)), min_size=2, max_size=30))
@settings(max_examples=50, deadline=None)
def test_morawetz_accumulate_nondecreasing(steps):
    t = 0.0
    recs = []
    for dt, v in steps:
        t += dt
        recs.append(_rec(t, decay=v, dens=v))
    for w in (CONST_WEIGHT, POWER_WEIGHT, MorawetzWeightSpec("split", a=1.0, lam=0.5, b=2.0, mu=1.5)):
        partial = [morawetz_accumulate(recs[: k + 1], w) for k in range(len(recs))]
        assert all(b >= a for a, b in zip(partial, partial[1:]))


def test_morawetz_constant_weight_exact():
    recs = [_rec(t, decay=2.0) for t in np.linspace(0, 3, 7)]
    assert morawetz_accumulate(recs, MorawetzWeightSpec("constant", a=4.0)) == pytest.approx(1.5)


def test_split_weight_time_integral():
    w = MorawetzWeightSpec("split", a=2.0, lam=0.5, b=3.0, mu=2.0)
    # ∫0^1 dt/(2√t) + ∫1^2 dt/(3t²) = 1 + 1/6
    assert w.time_integral(0.0, 2.0) == pytest.approx(1.0 + 1.0 / 6.0)


def test_weight_validation():
    with pytest.raises(ValueError):
        MorawetzWeightSpec("power", lam=1.0)
    with pytest.raises(ValueError):
        MorawetzWeightSpec("other")
    with pytest.raises(ValueError):
        SpacetimeNormSpec(4.0, 2.0)


@given(st.floats(0.1, 10.0))
@settings(max_examples=30, deadline=None)
def test_spacetime_norm_homogeneous(lam):
    t = np.linspace(0, 2, 11)
    base = [_rec(ti, lr=math.exp(-ti)) for ti in t]
    scaled = [_rec(ti, lr=lam**4 * math.exp(-ti)) for ti in t]
    spec = SpacetimeNormSpec(3.0, 4.0)
    assert spacetime_norm(scaled, spec) == pytest.approx(lam * spacetime_norm(base, spec), rel=1e-12)


def test_spacetime_norm_needs_integrals():
    with pytest.raises(UsageError):
        spacetime_norm([_rec(0.0), _rec(1.0)], SpacetimeNormSpec(4.0, 3.0))


@given(l=st.floats(0.2, 3.0), C=st.floats(0.1, 10.0))
@settings(max_examples=30, deadline=None)
def test_power_law_fit_exact(l, C):
    t = np.linspace(0.5, 20, 40)
    lf, Cf = fit_power_law(t, C * t**-l)
    assert lf == pytest.approx(l, rel=1e-9) and Cf == pytest.approx(C, rel=1e-9)


def test_fit_window_and_errors():
    t = np.linspace(0.1, 10, 100)
    v = np.where(t < 1, 1.0, t**-2.0)
    assert fit_power_law(t, v, t_min=1.0)[0] == pytest.approx(2.0)
    with pytest.raises(FitError):
        fit_power_law(t[:5], v[:5], t_min=0.0)
    with pytest.raises(FitError):
        fit_power_law(t, -v, t_min=1.0)
    recs = [_rec(ti, decay=ti**-1.5) for ti in np.linspace(1, 10, 20)]
    assert fit_decay(recs)[0] == pytest.approx(1.5)


def test_theta_integral_trapezoid():
    recs = [_rec(t) for t in np.linspace(0, 2, 21)]
    for r in recs:
        r.theta = 3.0
    # 4∫0^2 3τ dτ = 24
    assert theta_integral(recs)[-1] == pytest.approx(24.0)


def test_csv_layout_and_round_trip(tmp_path):
    spec = ProblemSpec(h=NonlinearitySpec.power(0.5), V=PotentialSpec(c=1.0, m=1.0, sign=-1))
    s = gaussian_state(M=512)
    rec = snapshot(s, spec, weights=(CONST_WEIGHT, POWER_WEIGHT))
    rec.morawetz = {CONST_WEIGHT.label: 0.0, POWER_WEIGHT.label: 0.0}
    buf = io.StringIO()
    write_csv([rec, rec], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 3
    mass_field = lines[1].split(",")[1]
    assert mass_field == f"{rec.mass2:.17g}"
    path = tmp_path / "d.csv"
    path.write_text(buf.getvalue(), encoding="utf-8")
    cols = read_csv(path)
    assert cols["mass2"][0] == rec.mass2  # 17 digits round-trip exactly
    assert cols["Lr_norm"][0] == pytest.approx(rec.lr_integrals[4.0] ** 0.25)


def test_snapshot_core_share():
    s = gaussian_state(M=4096)
    spec = ProblemSpec(V=PotentialSpec(c=1.0, m=2.0, sign=-1, epsilon=0.5))
    rec = snapshot(s, spec)
    assert 0 < rec.abs_pot_core < rec.abs_pot_term
