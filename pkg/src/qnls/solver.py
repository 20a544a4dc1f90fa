"""Crank-Nicolson time stepping with blowup detection.

A step from u^n to u^{n+1} solves for the midpoint w = (u^n + u^{n+1})/2

    w + i (dt/2) [Δw + V w + 2 w q Δ(h⁰ + h¹)/2] = u^n,

with h^k = h(|u^k|²) and q = (h¹ - h⁰)/(|u^{n+1}|² - |u^n|²), then sets
u^{n+1} = 2w - u^n.  The bracket is real times w plus a symmetric operator,
so discrete mass is conserved, and the divided difference q makes the
discrete energy (face-sum Dirichlet forms) telescope, so energy is conserved
too, both up to the Newton tolerance.  For h ≡ 0 this is the classical
scheme and costs one complex tridiagonal solve.

The nonlinear system is solved by Newton's method on real and imaginary
parts; each iterate costs one 2x2 block tridiagonal solve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import kernels
from .diagnostics import (
    CONST_WEIGHT,
    POWER_WEIGHT,
    DiagnosticsRecord,
    MorawetzWeightSpec,
    snapshot,
    step_quantities,
)
from .grid import BOUNDARY_TOL, FieldState, RadialGrid, dirichlet_energy
from .model import S_MIN, ProblemSpec, eval_h, eval_V

log = logging.getLogger(__name__)

COMPLETED = "completed"
BLOWUP = "blowup_detected"
STEP_COLLAPSE = "step_collapse"
BOUNDARY = "boundary_contaminated"

_MAX_BACKTRACK = 8


class StepRejected(RuntimeError):
    """The inner iteration failed; the caller should retry with a smaller dt."""


@dataclass(frozen=True)
class StepperConfig:
    dt0: float | None = None  # None: take ProblemSpec.dt0
    dt_min: float = 1e-7
    cn_tol: float = 1e-11
    cn_max_iter: int = 30
    blowup_factor: float = 1e3
    record_every: int = 10
    max_growth: float = 0.05  # largest accepted relative change of ∫|∇u|²+|∇h|² per step
    grow_after: int = 8  # quiet steps before dt is doubled back toward dt0
    boundary_tol: float = BOUNDARY_TOL
    weights: tuple[MorawetzWeightSpec, ...] = (CONST_WEIGHT, POWER_WEIGHT)
    r_bars: tuple[float, ...] = (4.0,)
    max_steps: int = 50_000_000
    # below this density the solver continues h linearly in |u|²; α < 1 terms
    # make |u| non-smooth at zeros of u, where Newton otherwise stalls
    s_floor: float = S_MIN

    def __post_init__(self):
        if self.dt0 is not None and not self.dt_min < self.dt0:
            raise ValueError("dt_min must be < dt0")
        if not self.cn_tol > 0:
            raise ValueError("cn_tol must be > 0")
        if not self.blowup_factor > 1:
            raise ValueError("blowup_factor must be > 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if not self.max_growth > 0:
            raise ValueError("max_growth must be > 0")
        if not self.s_floor >= S_MIN:
            raise ValueError(f"s_floor must be >= {S_MIN}")

    @classmethod
    def from_dict(cls, data: dict) -> "StepperConfig":
        known = {f for f in cls.__dataclass_fields__ if f not in ("weights", "r_bars")}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown solver keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            ftype = int if key in ("cn_max_iter", "record_every", "grow_after", "max_steps") else float
            kwargs[key] = ftype(value)
        return cls(**kwargs)


@dataclass
class RunOutcome:
    status: str
    t_final: float
    records: list[DiagnosticsRecord]
    blowup_time_estimate: float | None = None
    final_state: FieldState | None = None
    steps: int = 0
    rejections: int = 0
    newton_iterations: int = 0
    message: str = ""
    config: StepperConfig = field(default_factory=StepperConfig)


class Discretization:
    """Grid, potential samples and operator bands for one ProblemSpec."""

    def __init__(self, spec: ProblemSpec, backend: str | None = None, s_floor: float = S_MIN):
        self.spec = spec
        self.grid = RadialGrid(spec.dim, spec.radius, spec.grid_points)
        self.backend = backend
        self.V, self.xdV = eval_V(spec.V, self.grid.r)
        self.lower, self.diag, self.upper = self.grid.laplacian_bands
        self.s_floor = s_floor

    @cached_property
    def initial_state(self) -> FieldState:
        return FieldState(self.grid, 0.0, self.spec.u0.evaluate(self.grid.r))

    def apply_L(self, w: np.ndarray) -> np.ndarray:
        """(Δ + V) w."""
        out = (self.diag + self.V) * w
        out[1:] += self.lower[1:] * w[:-1]
        out[:-1] += self.upper[:-1] * w[1:]
        return out

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        out = self.diag * f
        out[1:] += self.lower[1:] * f[:-1]
        out[:-1] += self.upper[:-1] * f[1:]
        return out

    def h_solver(self, rho: np.ndarray):
        """(h, h', h'') of the solver's nonlinearity at ρ.

        Equal to h above ``s_floor``; below it h continues linearly, so the
        function is C¹ and h' stays bounded where |u| -> 0.
        """
        floor = self.s_floor
        h0, h1, h2 = eval_h(self.spec.h, np.maximum(rho, floor), floor)
        low = rho < floor
        h0 = np.where(low, h0 + h1 * (rho - floor), h0)
        h2 = np.where(low, 0.0, h2)
        return h0, h1, h2

    def quasilinear(self, w: np.ndarray) -> np.ndarray:
        """2 w h'(|w|²) Δh(|w|²) with the solver's h."""
        h0, h1, _ = self.h_solver(w.real**2 + w.imag**2)
        return 2.0 * w * h1 * self.laplacian(h0)

    def F(self, w: np.ndarray) -> np.ndarray:
        out = self.apply_L(w)
        if not self.spec.h.is_zero:
            out += self.quasilinear(w)
        return out

    def blowup_functional(self, u: np.ndarray) -> float:
        """∫|∇u|² + ∫|∇h(|u|²)|² (Definition of blowup)."""
        val = dirichlet_energy(u, self.grid)
        if not self.spec.h.is_zero:
            val += dirichlet_energy(eval_h(self.spec.h, np.abs(u) ** 2)[0], self.grid)
        return val

    def norm(self, w: np.ndarray) -> float:
        return math.sqrt(float(np.dot(self.grid.weights, w.real**2 + w.imag**2)))

    # -- one Crank-Nicolson step ------------------------------------------

    def solve_midpoint(self, un: np.ndarray, dt: float, cfg: StepperConfig, guess=None):
        tau = 0.5 * dt
        if self.spec.h.is_zero:
            lo = 1j * tau * self.lower
            di = 1.0 + 1j * tau * (self.diag + self.V)
            up = 1j * tau * self.upper
            w = kernels.solve_tridiagonal(lo, di, up, un.astype(complex), backend=self.backend)
            if not np.all(np.isfinite(w)):
                raise StepRejected("non-finite linear solve")
            return w, 1
        w = un.copy() if guess is None else guess.copy()
        M = self.grid.M
        scale = max(self.norm(un), 1e-300)
        rho0 = un.real**2 + un.imag**2
        H0 = self.h_solver(rho0)[0]
        R, parts = self._residual(w, un, tau, rho0, H0)
        res = self.norm(R)
        for it in range(1, cfg.cn_max_iter + 1):
            a, b = w.real, w.imag
            g, c_d, c_l, c_u, A, B = parts
            D = np.empty((M, 2, 2))
            Lo = np.zeros((M, 2, 2))
            Up = np.zeros((M, 2, 2))
            lin = tau * (self.diag + self.V) + 2.0 * tau * g
            D[:, 0, 0] = 1.0
            D[:, 0, 1] = -lin
            D[:, 1, 0] = lin
            D[:, 1, 1] = 1.0
            Lo[:, 0, 1] = -tau * self.lower
            Lo[:, 1, 0] = tau * self.lower
            Up[:, 0, 1] = -tau * self.upper
            Up[:, 1, 0] = tau * self.upper
            # δρ¹_k = 4 (A_k δa_k + B_k δb_k) with (A, B) the components of u^{n+1}
            for blk, c, Ak, Bk in (
                (D, c_d, A, B),
                (Lo, c_l, np.roll(A, 1), np.roll(B, 1)),
                (Up, c_u, np.roll(A, -1), np.roll(B, -1)),
            ):
                f = 8.0 * tau * c
                blk[:, 0, 0] += -f * b * Ak
                blk[:, 0, 1] += -f * b * Bk
                blk[:, 1, 0] += f * a * Ak
                blk[:, 1, 1] += f * a * Bk
            rhs = -np.stack([R.real, R.imag], axis=1)
            delta = kernels.solve_block_tridiagonal(Lo, D, Up, rhs, backend=self.backend)
            if not np.all(np.isfinite(delta)):
                raise StepRejected("non-finite Newton update")
            dw = delta[:, 0] + 1j * delta[:, 1]
            step_norm = self.norm(dw)
            # backtrack on the residual norm; |u| has kinks at zeros of u when
            # some alpha < 1, and plain Newton can cycle near them
            lam = 1.0
            for _ in range(_MAX_BACKTRACK):
                w_new = w + lam * dw
                R, parts = self._residual(w_new, un, tau, rho0, H0)
                res_new = self.norm(R)
                if res_new <= (1.0 - 1e-4 * lam) * res:
                    break
                lam *= 0.5
            w, res = w_new, res_new
            if step_norm <= cfg.cn_tol * scale or res <= cfg.cn_tol * scale:
                return w, it
        raise StepRejected(f"Newton iteration did not converge in {cfg.cn_max_iter} iterations")

    def _residual(self, w, un, tau, rho0, H0):
        """Residual of the conservative step and the pieces of its Jacobian.

        h' is replaced by the divided difference q = (h(ρ¹) - h(ρ⁰))/(ρ¹ - ρ⁰)
        and Δh by the average of both time levels, which makes the discrete
        energy change telescope to zero.
        """
        u1 = 2.0 * w - un
        rho1 = u1.real**2 + u1.imag**2
        H1, d1, _ = self.h_solver(rho1)
        d = rho1 - rho0
        mid = 0.5 * (rho0 + rho1)
        _, hm1, hm2 = self.h_solver(mid)
        near = np.abs(d) <= 1e-7 * np.maximum(mid, self.s_floor)
        safe = np.where(near, 1.0, d)
        q = np.where(near, hm1, (H1 - H0) / safe)
        dq = np.where(near, 0.5 * hm2, (d1 - q) / safe)
        lap_avg = self.laplacian(0.5 * (H0 + H1))
        g = q * lap_avg
        R = w + 1j * tau * (self.apply_L(w) + 2.0 * g * w) - un
        # δg_j = Σ_k c_jk δρ¹_k
        c_d = dq * lap_avg + 0.5 * q * self.diag * d1
        c_l = np.zeros_like(q)
        c_u = np.zeros_like(q)
        c_l[1:] = 0.5 * q[1:] * self.lower[1:] * d1[:-1]
        c_u[:-1] = 0.5 * q[:-1] * self.upper[:-1] * d1[1:]
        return R, (g, c_d, c_l, c_u, u1.real, u1.imag)

    def step_values(self, un: np.ndarray, dt: float, cfg: StepperConfig, guess=None):
        w, iters = self.solve_midpoint(un, dt, cfg, guess)
        return 2.0 * w - un, iters


def step(state: FieldState, spec: ProblemSpec, dt: float, cfg: StepperConfig | None = None,
         disc: Discretization | None = None) -> FieldState:
    """Advance ``state`` by one Crank-Nicolson step of size ``dt``.

    Negative dt integrates backward.  Raises :class:`StepRejected` when the
    inner iteration fails or produces non-finite values.
    """
    if dt == 0 or not math.isfinite(dt):
        raise ValueError("dt must be finite and nonzero")
    if not np.all(np.isfinite(state.values)):
        raise ValueError("state contains non-finite values")
    cfg = cfg or StepperConfig()
    disc = disc or Discretization(spec, s_floor=cfg.s_floor)
    values, _ = disc.step_values(state.values, dt, cfg)
    return FieldState(state.grid, state.t + dt, values)


class _Trajectory:
    """Running time integrals along accepted steps (trapezoid rule per step)."""

    def __init__(self, spec: ProblemSpec, cfg: StepperConfig, first: DiagnosticsRecord, state: FieldState):
        self.spec = spec
        self.weights = cfg.weights
        self.energy0 = first.energy
        self.J0 = first.J
        self.theta_int = 0.0
        self.theta_int_rho = 0.0
        self.morawetz = {w.label: 0.0 for w in cfg.weights}
        self.prev = self._quantities(state)
        self.finish(first)

    def _quantities(self, state: FieldState):
        return (state.t,) + step_quantities(state, self.spec, self.weights)

    def advance(self, state: FieldState):
        t0, th0, thr0, dec0, dens0 = self.prev
        cur = self._quantities(state)
        t1, th1, thr1, dec1, dens1 = cur
        dt = t1 - t0
        self.theta_int += 2.0 * dt * (t0 * th0 + t1 * th1)
        self.theta_int_rho += 2.0 * dt * (t0 * thr0 + t1 * thr1)
        for w in self.weights:
            if w.spatial:
                inc = 0.5 * (dens0[w.label] + dens1[w.label]) * dt
            else:
                inc = 0.5 * (dec0 + dec1) * w.time_integral(t0, t1)
            self.morawetz[w.label] += inc
        self.prev = cur

    def finish(self, rec: DiagnosticsRecord):
        """Copy the running integrals into a record taken at the current time."""
        t = rec.t
        rec.theta_integral = self.theta_int
        rec.theta_integral_rho = self.theta_int_rho
        rec.P = rec.J + 4.0 * t * rec.y + 8.0 * t * t * self.energy0
        rec.P_residual = rec.P - (self.J0 + self.theta_int)
        rec.P_residual_rho = rec.P - (self.J0 + self.theta_int_rho)
        rec.morawetz = dict(self.morawetz)


def run(spec: ProblemSpec, cfg: StepperConfig | None = None, *, backend: str | None = None,
        keep_states: bool = False, progress=None) -> RunOutcome:
    """Integrate from t = 0 to spec.t_end or until a termination trigger.

    Steps are rejected (dt halved) when the inner iteration fails or when the
    blowup functional ∫|∇u|²+|∇h|² changes by more than ``max_growth`` in one
    step.  If dt would drop below ``dt_min``, the run ends with
    ``blowup_detected`` when that functional exceeds ``blowup_factor`` times
    its initial value and with ``step_collapse`` otherwise.
    """
    cfg = cfg or StepperConfig()
    dt0 = cfg.dt0 if cfg.dt0 is not None else spec.dt0
    if not cfg.dt_min < dt0:
        raise ValueError("dt_min must be < dt0")
    disc = Discretization(spec, backend=backend, s_floor=cfg.s_floor)
    state = disc.initial_state
    u = state.values
    weights, r_bars = cfg.weights, cfg.r_bars

    def measure(values, t, dt_used, n):
        rec = snapshot(FieldState(disc.grid, t, values), spec, weights=weights, r_bars=r_bars)
        rec.dt = dt_used
        rec.step = n
        return rec

    first = measure(u, 0.0, 0.0, 0)
    traj = _Trajectory(spec, cfg, first, state)
    records = [first]
    states = [state] if keep_states else None
    G0 = disc.blowup_functional(u)
    G = G0
    t = 0.0
    dt = dt0
    steps = rejections = iters_total = quiet = 0
    status, message, t_blow = COMPLETED, "", None
    prev_u = None
    eps_t = 1e-12 * max(1.0, spec.t_end)

    while t < spec.t_end - eps_t:
        if steps >= cfg.max_steps:
            status, message = STEP_COLLAPSE, "max_steps exceeded"
            break
        dt_try = min(dt, spec.t_end - t)
        reason = None
        guess = None
        if prev_u is not None:
            # linear extrapolation of the midpoint
            guess = u + 0.5 * (u - prev_u) * (dt_try / last_dt)
        try:
            new_u, iters = disc.step_values(u, dt_try, cfg, guess)
            iters_total += iters
            G_new = disc.blowup_functional(new_u)
            change = abs(G_new - G) / max(G, 1e-300)
            if not math.isfinite(G_new):
                reason = "non-finite state"
            elif change > cfg.max_growth:
                reason = f"gradient change {change:.3g} > {cfg.max_growth}"
        except StepRejected as exc:
            reason = str(exc)
        if reason is not None:
            log.debug("t=%.6g dt=%.3g rejected: %s", t, dt_try, reason)
            rejections += 1
            quiet = 0
            dt = 0.5 * dt_try
            if dt < cfg.dt_min:
                if G > cfg.blowup_factor * G0:
                    status, t_blow = BLOWUP, t
                    message = f"dt < dt_min with ∫|∇u|²+|∇h|² = {G / G0:.3g} x initial"
                else:
                    status = STEP_COLLAPSE
                    message = f"dt < dt_min ({reason})"
                break
            continue

        prev_u, last_dt = u, dt_try
        u, G = new_u, G_new
        t += dt_try
        steps += 1
        quiet = quiet + 1 if change < 0.25 * cfg.max_growth else 0
        if quiet >= cfg.grow_after and dt < dt0:
            dt = min(2.0 * dt, dt0)
            quiet = 0
        traj.advance(FieldState(disc.grid, t, u))
        at_end = t >= spec.t_end - eps_t
        boundary_ratio = float(abs(u[-1])) / max(float(np.max(np.abs(u))), 1e-300)
        contaminated = boundary_ratio > cfg.boundary_tol
        if steps % cfg.record_every == 0 or at_end or contaminated:
            rec = measure(u, t, dt_try, steps)
            traj.finish(rec)
            records.append(rec)
            if keep_states:
                states.append(FieldState(disc.grid, t, u.copy()))
            if progress is not None:
                progress(rec)
        if contaminated:
            status = BOUNDARY
            message = f"|u(R)|/max|u| = {boundary_ratio:.3g} > {cfg.boundary_tol}"
            break

    if records[-1].t != t:
        rec = measure(u, t, last_dt if steps else 0.0, steps)
        traj.finish(rec)
        records.append(rec)
    outcome = RunOutcome(
        status=status,
        t_final=t,
        records=records,
        blowup_time_estimate=t_blow,
        final_state=FieldState(disc.grid, t, u),
        steps=steps,
        rejections=rejections,
        newton_iterations=iters_total,
        message=message,
        config=cfg,
    )
    if keep_states:
        outcome.states = states
    log.info("run finished: %s at t=%.6g after %d steps (%s)", status, t, steps, message)
    return outcome
