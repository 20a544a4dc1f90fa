"""Functionals of a field state and of a recorded trajectory.

Mass, energy, variance J, virial y, the pseudo-conformal quantity P and its
source θ, the blowup functional B, Morawetz accumulators, spacetime norms and
power-law decay fits.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .grid import FieldState, RadialGrid, dirichlet_energy, integrate, radial_gradient
from .model import S_MIN, NonlinearitySpec, PotentialSpec, ProblemSpec, eval_h, eval_V

CSV_HEADER = (
    "t", "mass2", "grad_u2", "grad_h2", "pot_term", "energy", "J", "y",
    "theta", "P", "P_residual", "morawetz_const", "morawetz_power", "Lr_norm",
)


class UsageError(ValueError):
    """A trajectory functional was called without the data it needs."""


class FitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# weights and norms


@dataclass(frozen=True)
class MorawetzWeightSpec:
    """Denominator a(x, t) of the Morawetz integrand.

    ``constant``: a; ``power``: (|x| + t)^lam; ``split``: a t^lam for t <= 1
    and b t^mu for t > 1.
    """

    kind: str = "constant"
    a: float = 1.0
    b: float = 1.0
    lam: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "power", "split"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "power" and not (0.0 <= self.lam < 1.0):
            raise ValueError("power weight needs 0 <= lambda < 1")
        if self.kind == "split" and self.lam >= 1.0:
            raise ValueError("split weight needs lambda < 1 near t = 0")
        if self.kind in ("constant", "split") and not (self.a > 0 and self.b > 0):
            raise ValueError("weight constants must be positive")

    @property
    def label(self) -> str:
        if self.kind == "constant":
            return f"const:{self.a:g}"
        if self.kind == "power":
            return f"power:{self.lam:g}"
        return f"split:{self.a:g}:{self.lam:g}:{self.b:g}:{self.mu:g}"

    @property
    def spatial(self) -> bool:
        return self.kind == "power"

    def time_integral(self, t0: float, t1: float) -> float:
        """∫_{t0}^{t1} dt / a(t) for the spatially constant kinds."""
        if self.kind == "constant":
            return (t1 - t0) / self.a

        def prim(t, c, p):
            if abs(1.0 - p) < 1e-14:
                return math.log(t) / c
            return t ** (1.0 - p) / (c * (1.0 - p))

        total = 0.0
        lo, hi = t0, min(t1, 1.0)
        if hi > lo:
            total += prim(hi, self.a, self.lam) - prim(lo, self.a, self.lam)
        lo, hi = max(t0, 1.0), t1
        if hi > lo:
            total += prim(hi, self.b, self.mu) - prim(lo, self.b, self.mu)
        return total


CONST_WEIGHT = MorawetzWeightSpec("constant")
POWER_WEIGHT = MorawetzWeightSpec("power", lam=0.5)


@dataclass(frozen=True)
class SpacetimeNormSpec:
    q_bar: float
    r_bar: float
    M_exp: float = 1.0

    def __post_init__(self):
        if not self.r_bar > 2:
            raise ValueError("r_bar must be > 2")
        if not self.q_bar >= 1:
            raise ValueError("q_bar must be >= 1")


# ---------------------------------------------------------------------------
# records


@dataclass
class DiagnosticsRecord:
    t: float
    mass2: float
    grad_u2: float
    grad_h2: float
    pot_term: float
    abs_pot_term: float
    abs_pot_core: float
    energy: float
    J: float
    y: float
    theta: float
    theta_rho: float
    dy_direct: float
    dy_rho: float
    P: float = float("nan")
    P_residual: float = float("nan")
    P_residual_rho: float = float("nan")
    theta_integral: float = 0.0
    theta_integral_rho: float = 0.0
    morawetz: dict = field(default_factory=dict)
    morawetz_density: dict = field(default_factory=dict)
    lr_integrals: dict = field(default_factory=dict)
    dt: float = 0.0
    step: int = 0

    @property
    def blowup_functional(self) -> float:
        return self.grad_u2 + self.grad_h2

    @property
    def decay_quantity(self) -> float:
        return self.grad_h2 + self.abs_pot_term

    @property
    def Lr_norm(self) -> float:
        if 4.0 in self.lr_integrals:
            return self.lr_integrals[4.0] ** 0.25
        if not self.lr_integrals:
            return float("nan")
        r_bar, val = next(iter(self.lr_integrals.items()))
        return val ** (1.0 / r_bar)

    def csv_row(self) -> list[str]:
        vals = [
            self.t, self.mass2, self.grad_u2, self.grad_h2, self.pot_term, self.energy,
            self.J, self.y, self.theta, self.P, self.P_residual,
            self.morawetz.get(CONST_WEIGHT.label, float("nan")),
            self.morawetz.get(POWER_WEIGHT.label, float("nan")),
            self.Lr_norm,
        ]
        return [format_float(v) for v in vals]


def format_float(x: float) -> str:
    return f"{x:.17g}"


def write_csv(records: Iterable[DiagnosticsRecord], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in records:
        writer.writerow(rec.csv_row())


def csv_text(records: Iterable[DiagnosticsRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = np.array([[float(x) for x in row] for row in body]).reshape(len(body), len(header))
    return {name: cols[:, i] for i, name in enumerate(header)}


# ---------------------------------------------------------------------------
# single-state functionals


def _grid_for(state: FieldState) -> RadialGrid:
    return state.grid


def _h_density(h: NonlinearitySpec, rho: np.ndarray):
    if h.is_zero:
        z = np.zeros_like(rho)
        return z, z, z
    return eval_h(h, rho)


def mass(state: FieldState) -> float:
    """(∫|u|² dx)^{1/2}."""
    return math.sqrt(max(integrate(state.density, state.grid), 0.0))


def variance_J(state: FieldState) -> float:
    return integrate(state.grid.r**2 * state.density, state.grid)


def virial_y(state: FieldState) -> float:
    """Im ∫ conj(u) (x·∇u) dx = Im ∫ conj(u) r ∂_r u dx."""
    u = state.values
    du = radial_gradient(u, state.grid)
    return float(integrate(np.imag(np.conj(u) * state.grid.r * du), state.grid))


def energy_parts(state: FieldState, spec: ProblemSpec) -> tuple[float, float, float]:
    """(∫|∇u|², ∫|∇h(|u|²)|², ∫V|u|²) with the face-sum gradient quadrature."""
    grid = state.grid
    rho = state.density
    grad_u2 = dirichlet_energy(state.values, grid)
    if spec.h.is_zero:
        grad_h2 = 0.0
    else:
        grad_h2 = dirichlet_energy(eval_h(spec.h, rho)[0], grid)
    V, _ = eval_V(spec.V, grid.r)
    pot = integrate(V * rho, grid)
    return grad_u2, grad_h2, pot


def energy(state: FieldState, spec: ProblemSpec) -> float:
    """E = ½∫[|∇u|² + |∇h(|u|²)|²] dx - ½∫V|u|² dx."""
    gu, gh, pot = energy_parts(state, spec)
    return 0.5 * (gu + gh) - 0.5 * pot


def bracket(h: NonlinearitySpec, s) -> np.ndarray:
    """2 h''(s) h'(s) s + h'(s)², with derivatives at max(s, S_MIN)."""
    s = np.maximum(np.asarray(s, dtype=float), S_MIN)
    _, h1, h2 = _h_density(h, s)
    return 2.0 * h2 * h1 * s + h1**2


def theta(state: FieldState, spec: ProblemSpec, form: str = "direct") -> float:
    """Source term of the pseudo-conformal law, P'(t) = 4 t θ(t).

    ``form="direct"``: -4N ∫ [2h''h's + h'²] |u|² |∇u|² - ∫ [2V + x·∇V] |u|².
    ``form="rho"``:   -N  ∫ [2h''h's + h'²] |∇|u|²|²  - ∫ [2V + x·∇V] |u|².
    The two agree when u has a spatially constant phase (|∇ρ|² = 4ρ|∇u|²).
    """
    grid = state.grid
    rho = state.density
    V, xdV = eval_V(spec.V, grid.r)
    pot = integrate((2.0 * V + xdV) * rho, grid)
    if spec.h.is_zero:
        return -pot
    br = bracket(spec.h, rho)
    N = grid.N
    if form == "direct":
        du2 = np.abs(radial_gradient(state.values, grid)) ** 2
        quasi = -4.0 * N * integrate(br * rho * du2, grid)
    elif form == "rho":
        drho2 = radial_gradient(rho, grid) ** 2
        quasi = -1.0 * N * integrate(br * drho2, grid)
    else:
        raise ValueError(f"unknown theta form {form!r}")
    return quasi - pot


def virial_rate(state: FieldState, spec: ProblemSpec, form: str = "direct") -> float:
    """Right side of dy/dt from the second-moment identity.

    direct: -2∫|∇u|² - (N+2)∫|∇h|² - 8N∫h''h'|u|⁴|∇u|² - ∫(x·∇V)|u|²
    rho:   same with 8N h''h'|u|⁴|∇u|² replaced by 2N h''h'|u|²|∇|u|²|².
    """
    grid = state.grid
    rho = state.density
    N = grid.N
    gu, gh, _ = energy_parts(state, spec)
    _, xdV = eval_V(spec.V, grid.r)
    out = -2.0 * gu - (N + 2) * gh - integrate(xdV * rho, grid)
    if spec.h.is_zero:
        return out
    s = np.maximum(rho, S_MIN)
    _, h1, h2 = eval_h(spec.h, s)
    if form == "direct":
        du2 = np.abs(radial_gradient(state.values, grid)) ** 2
        out -= 8.0 * N * integrate(h2 * h1 * rho**2 * du2, grid)
    elif form == "rho":
        drho2 = radial_gradient(rho, grid) ** 2
        out -= 2.0 * N * integrate(h2 * h1 * rho * drho2, grid)
    else:
        raise ValueError(f"unknown form {form!r}")
    return out


def pseudo_conformal_P(state: FieldState, spec: ProblemSpec, *, energy0=None, J0=None,
                       theta_integral=None) -> tuple[float, float]:
    """P(t) = ∫|xu|² + 4t y + 8t² E(u₀) and its residual against ∫|xu₀|² + 4∫τθ.

    Needs the trajectory context ``energy0``, ``J0`` and ``theta_integral``
    (the running value of 4∫₀^t τ θ(τ) dτ).
    """
    if energy0 is None or J0 is None or theta_integral is None:
        raise UsageError("pseudo_conformal_P needs energy0, J0 and theta_integral")
    t = state.t
    P = variance_J(state) + 4.0 * t * virial_y(state) + 8.0 * t * t * energy0
    return P, P - (J0 + theta_integral)


def blowup_B(state: FieldState, spec: ProblemSpec, T: float, *, energy0=None) -> float:
    """B(t) = ∫|xu|² - 4(T-t) y + 8(T-t)² E(u₀) for a solution blowing up at T."""
    if not T > state.t:
        raise ValueError("blowup_B needs T > t")
    if energy0 is None:
        energy0 = energy(state, spec)
    tau = T - state.t
    return variance_J(state) - 4.0 * tau * virial_y(state) + 8.0 * tau * tau * energy0


def blowup_B_direct(state: FieldState, spec: ProblemSpec, T: float) -> float:
    """Operator form ∫|(x + 2i(T-t)∇)u|² + 4(T-t)²[∫|∇h|² - ∫V|u|²] by quadrature."""
    if not T > state.t:
        raise ValueError("blowup_B needs T > t")
    grid = state.grid
    tau = T - state.t
    u = state.values
    field_ = grid.r * u + 2j * tau * radial_gradient(u, grid)
    _, gh, pot = energy_parts(state, spec)
    return integrate(np.abs(field_) ** 2, grid) + 4.0 * tau * tau * (gh - pot)


def lr_integral(state: FieldState, r_bar: float) -> float:
    return integrate(np.abs(state.values) ** r_bar, state.grid)


def morawetz_density(state: FieldState, spec: ProblemSpec, weight: MorawetzWeightSpec) -> float:
    """∫ [|∇h(|u|²)|² + |V||u|²] / a(x, t) dx at the state's time."""
    grid = state.grid
    rho = state.density
    V, _ = eval_V(spec.V, grid.r)
    if weight.kind == "power":
        if spec.h.is_zero:
            dh2 = np.zeros_like(rho)
        else:
            dh2 = radial_gradient(eval_h(spec.h, rho)[0], grid) ** 2
        w = (grid.r + state.t) ** (-weight.lam)
        return integrate((dh2 + np.abs(V) * rho) * w, grid)
    _, gh, _ = energy_parts(state, spec)
    base = gh + integrate(np.abs(V) * rho, grid)
    if weight.kind == "constant":
        return base / weight.a
    t = state.t
    if t <= 0:
        return float("inf")
    return base / (weight.a * t**weight.lam if t <= 1 else weight.b * t**weight.mu)


def step_quantities(state: FieldState, spec: ProblemSpec,
                    weights: Sequence[MorawetzWeightSpec] = ()) -> tuple[float, float, float, dict]:
    """(θ direct form, θ rho form, ∫|∇h|² + ∫|V||u|², weighted densities) for running integrals."""
    grid = state.grid
    rho = state.density
    V, xdV = eval_V(spec.V, grid.r)
    pot = integrate((2.0 * V + xdV) * rho, grid)
    absV_rho = np.abs(V) * rho
    if spec.h.is_zero:
        th = th_rho = -pot
        decay = integrate(absV_rho, grid)
        dh2 = None
    else:
        h0 = eval_h(spec.h, rho)[0]
        br = bracket(spec.h, rho)
        du2 = np.abs(radial_gradient(state.values, grid)) ** 2
        drho2 = radial_gradient(rho, grid) ** 2
        th = -4.0 * grid.N * integrate(br * rho * du2, grid) - pot
        th_rho = -1.0 * grid.N * integrate(br * drho2, grid) - pot
        decay = dirichlet_energy(h0, grid) + integrate(absV_rho, grid)
        dh2 = radial_gradient(h0, grid) ** 2
    densities = {}
    for w in weights:
        if w.spatial:
            dens = absV_rho if dh2 is None else dh2 + absV_rho
            densities[w.label] = integrate(dens * (grid.r + state.t) ** (-w.lam), grid)
    return th, th_rho, decay, densities


def snapshot(state: FieldState, spec: ProblemSpec, *, weights: Sequence[MorawetzWeightSpec] = (),
             r_bars: Sequence[float] = (4.0,)) -> DiagnosticsRecord:
    """Evaluate every single-state functional (trajectory fields left blank)."""
    grid = state.grid
    rho = state.density
    V, xdV = eval_V(spec.V, grid.r)
    gu, gh, pot = energy_parts(state, spec)
    absV = np.abs(V)
    core = grid.r < spec.V.epsilon if spec.V.c > 0 else np.zeros(grid.M, dtype=bool)
    rec = DiagnosticsRecord(
        t=state.t,
        mass2=integrate(rho, grid),
        grad_u2=gu,
        grad_h2=gh,
        pot_term=pot,
        abs_pot_term=integrate(absV * rho, grid),
        abs_pot_core=integrate(np.where(core, absV * rho, 0.0), grid),
        energy=0.5 * (gu + gh) - 0.5 * pot,
        J=integrate(grid.r**2 * rho, grid),
        y=virial_y(state),
        theta=theta(state, spec, "direct"),
        theta_rho=theta(state, spec, "rho"),
        dy_direct=virial_rate(state, spec, "direct"),
        dy_rho=virial_rate(state, spec, "rho"),
    )
    for w in weights:
        if w.spatial:
            rec.morawetz_density[w.label] = morawetz_density(state, spec, w)
    for rb in r_bars:
        rec.lr_integrals[float(rb)] = lr_integral(state, rb)
    return rec


# ---------------------------------------------------------------------------
# trajectory functionals


def theta_integral(records: Sequence[DiagnosticsRecord], form: str = "direct") -> np.ndarray:
    """Running 4∫₀^t τθ(τ) dτ by the trapezoid rule over the records."""
    t = np.array([r.t for r in records])
    th = np.array([r.theta if form == "direct" else r.theta_rho for r in records])
    f = 4.0 * t * th
    out = np.zeros(len(records))
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
    return out


def morawetz_accumulate(records: Sequence[DiagnosticsRecord], weight: MorawetzWeightSpec) -> float:
    """Partial spacetime integral ∫₀^{t_final} ∫ [|∇h|² + |V||u|²]/a dx dt.

    Constant and split weights only depend on t, so each interval contributes
    the mean spatial integral times the exact ∫ dt/a.  Power weights use the
    per-record spatially weighted densities by the trapezoid rule.
    """
    if not records:
        raise UsageError("morawetz_accumulate needs at least one record")
    total = 0.0
    for prev, cur in zip(records[:-1], records[1:]):
        if weight.spatial:
            try:
                f0 = prev.morawetz_density[weight.label]
                f1 = cur.morawetz_density[weight.label]
            except KeyError:
                raise UsageError(f"records carry no density for weight {weight.label}") from None
            total += 0.5 * (f0 + f1) * (cur.t - prev.t)
        else:
            mean = 0.5 * (prev.decay_quantity + cur.decay_quantity)
            total += mean * weight.time_integral(prev.t, cur.t)
    return total


def spacetime_norm(records: Sequence[DiagnosticsRecord], spec: SpacetimeNormSpec) -> float:
    """(∫₀^{t_final} (∫|u|^r̄ dx)^{q̄/r̄} dt)^{1/q̄} by the trapezoid rule."""
    if not records:
        raise UsageError("spacetime_norm needs records")
    key = float(spec.r_bar)
    try:
        vals = np.array([rec.lr_integrals[key] for rec in records])
    except KeyError:
        raise UsageError(f"records carry no L^{spec.r_bar} integrals") from None
    t = np.array([rec.t for rec in records])
    f = np.maximum(vals, 0.0) ** (spec.q_bar / spec.r_bar)
    integral = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(t))) if len(t) > 1 else 0.0
    return integral ** (1.0 / spec.q_bar)


_SELECTORS: dict[str, Callable[[DiagnosticsRecord], float]] = {
    "decay": lambda r: r.decay_quantity,
    "grad_h2": lambda r: r.grad_h2,
    "abs_pot": lambda r: r.abs_pot_term,
    "grad_u2": lambda r: r.grad_u2,
}


def fit_power_law(t, values, t_min: float = 1.0, t_max: float | None = None) -> tuple[float, float]:
    """Least-squares fit of log(value) = log C - l log t over t_min <= t <= t_max."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = t >= t_min
    if t_max is not None:
        sel &= t <= t_max
    if np.count_nonzero(sel) < 8:
        raise FitError(f"need at least 8 samples with t >= {t_min}, got {np.count_nonzero(sel)}")
    if np.any(v[sel] <= 0) or not np.all(np.isfinite(v[sel])):
        raise FitError("decay fit needs positive finite values in the window")
    slope, intercept = np.polyfit(np.log(t[sel]), np.log(v[sel]), 1)
    return float(-slope), float(math.exp(intercept))


def fit_decay(records, selector="decay", t_min: float = 1.0, t_max: float | None = None):
    """Fit value ≈ C / t^l on the records; returns (l, C).

    ``selector`` is a field name (``decay`` = ∫|∇h|² + ∫|V||u|²) or a callable.
    """
    fn = _SELECTORS.get(selector) if isinstance(selector, str) else selector
    if fn is None:
        fn = lambda r: getattr(r, selector)  # noqa: E731
    t = [r.t for r in records]
    v = [fn(r) for r in records]
    return fit_power_law(t, v, t_min, t_max)
