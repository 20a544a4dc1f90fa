"""Problem description for iu_t = Δu + 2u h'(|u|²) Δh(|u|²) + V(x) u.

The nonlinearity is a finite power sum h(s) = Σ b_i s^{α_i} and the potential
is a radial power law ``sign * c * r**-m`` capped inside a core of radius
``epsilon`` plus a constant bounded part.  Problems are read from TOML files.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

S_MIN = 1e-12


class ConfigError(ValueError):
    """Invalid or unparsable problem configuration."""


@dataclass(frozen=True)
class NonlinearitySpec:
    """h(s) = Σ b s^alpha over ``terms``; an empty tuple means h ≡ 0."""

    terms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        terms = tuple(sorted(((float(b), float(a)) for b, a in self.terms), key=lambda t: t[1]))
        for b, a in terms:
            if not (b >= 0.0 and math.isfinite(b)):
                raise ValueError(f"coefficient b={b} must be finite and >= 0")
            if not (a > 0.0 and math.isfinite(a)):
                raise ValueError(f"exponent alpha={a} must be finite and > 0")
        alphas = [a for _, a in terms]
        if len(set(alphas)) != len(alphas):
            raise ValueError("duplicate exponents in h terms")
        # zero coefficients carry no information
        terms = tuple(t for t in terms if t[0] > 0.0)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def power(cls, alpha: float, b: float = 1.0) -> "NonlinearitySpec":
        return cls(((b, alpha),))

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def alphas(self) -> tuple[float, ...]:
        return tuple(a for _, a in self.terms)


@dataclass(frozen=True)
class PotentialSpec:
    """V(r) = sign*c*r^-m for r >= epsilon, capped at r = epsilon, plus v_bounded."""

    c: float = 0.0
    m: float = 0.0
    sign: int = 1
    v_bounded: float = 0.0
    epsilon: float = 1e-3

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be >= 0")
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")

    @property
    def is_singular(self) -> bool:
        return self.c > 0 and self.m > 0

    @property
    def is_zero(self) -> bool:
        return self.c == 0 and self.v_bounded == 0


@dataclass(frozen=True)
class InitialDataSpec:
    """Chirped Gaussian A exp(-r²/2σ²) exp(iβr²), or explicit samples."""

    amplitude: float = 1.0
    sigma: float = 1.0
    chirp: float = 0.0
    samples: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.samples is None:
            if not self.amplitude > 0:
                raise ValueError("u0 amplitude must be > 0")
            if not self.sigma > 0:
                raise ValueError("u0 sigma must be > 0")

    def evaluate(self, r: np.ndarray) -> np.ndarray:
        if self.samples is not None:
            values = np.asarray(self.samples, dtype=complex)
            if values.shape != np.shape(r):
                raise ValueError("tabulated u0 does not match the grid")
            return values.copy()
        r = np.asarray(r, dtype=float)
        return self.amplitude * np.exp(-r**2 / (2 * self.sigma**2) + 1j * self.chirp * r**2)


@dataclass(frozen=True)
class ProblemSpec:
    dim: int = 3
    h: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    V: PotentialSpec = field(default_factory=PotentialSpec)
    u0: InitialDataSpec = field(default_factory=InitialDataSpec)
    radius: float = 16.0
    grid_points: int = 1024
    dt0: float = 1e-3
    t_end: float = 1.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 3:
            raise ValueError("dim must be an integer >= 3")
        if not self.radius > 0:
            raise ValueError("radius must be > 0")
        if int(self.grid_points) != self.grid_points or self.grid_points < 16:
            raise ValueError("grid_points must be ≥ 16")
        if not self.dt0 > 0:
            raise ValueError("dt0 must be > 0")
        if not self.t_end >= 0:
            raise ValueError("t_end must be >= 0")

    def replace(self, **changes) -> "ProblemSpec":
        from dataclasses import replace

        return replace(self, **changes)


def eval_h(h: NonlinearitySpec, s, s_min: float = S_MIN):
    """Return (h(s), h'(s), h''(s)).

    Terms with alpha < 1 (resp. < 2) evaluate h' (resp. h'') at max(s, s_min)
    so that the derivatives stay finite where |u| -> 0.
    """
    scalar = np.ndim(s) == 0
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise ValueError("eval_h requires s >= 0")
    h0 = np.zeros_like(s)
    h1 = np.zeros_like(s)
    h2 = np.zeros_like(s)
    floored = np.maximum(s, s_min)
    for b, a in h.terms:
        h0 += b * s**a
        s1 = floored if a < 1 else s
        h1 += b * a * s1 ** (a - 1)
        s2 = floored if a < 2 else s
        h2 += b * a * (a - 1) * s2 ** (a - 2)
    if scalar:
        return float(h0), float(h1), float(h2)
    return h0, h1, h2


def eval_V(V: PotentialSpec, r):
    """Return (V(r), x·∇V(r)) with the core cap applied for r < epsilon."""
    scalar = np.ndim(r) == 0
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("eval_V requires r >= 0")
    if V.c == 0:
        val = np.full_like(r, V.v_bounded)
        dval = np.zeros_like(r)
    else:
        rr = np.maximum(r, V.epsilon)
        sing = V.sign * V.c * rr ** (-V.m)
        dval = np.where(r >= V.epsilon, -V.m * sing, 0.0)
        val = sing + V.v_bounded
    if scalar:
        return float(val), float(dval)
    return val, dval


# --------------------------------------------------------------------------
# configuration files

_SECTIONS = {"h", "V", "u0", "solver", "problem"}


def _terms_from_config(raw: Any) -> tuple[tuple[float, float], ...]:
    if raw is None:
        return ()
    if not isinstance(raw, (list, tuple)):
        raise ConfigError("h.terms must be a list of [b, alpha] pairs")
    out = []
    for pair in raw:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError("h.terms must be a list of [b, alpha] pairs")
        out.append((float(pair[0]), float(pair[1])))
    return tuple(out)


def problem_from_dict(data: dict) -> tuple[ProblemSpec, dict]:
    """Build a ProblemSpec from parsed TOML; returns (spec, solver section)."""
    top = dict(data.get("problem", {}))
    for key, value in data.items():
        if key not in _SECTIONS:
            top[key] = value
    h_sec = data.get("h", {})
    v_sec = data.get("V", {})
    u_sec = data.get("u0", {})
    known_top = {"dim", "radius", "grid_points", "dt0", "t_end"}
    unknown = set(top) - known_top
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    try:
        h = NonlinearitySpec(_terms_from_config(h_sec.get("terms")))
        V = PotentialSpec(
            c=float(v_sec.get("c", 0.0)),
            m=float(v_sec.get("m", 0.0)),
            sign=int(v_sec.get("sign", 1)),
            v_bounded=float(v_sec.get("bounded", 0.0)),
            epsilon=float(v_sec.get("epsilon", 1e-3)),
        )
        u0 = InitialDataSpec(
            amplitude=float(u_sec.get("amplitude", 1.0)),
            sigma=float(u_sec.get("sigma", 1.0)),
            chirp=float(u_sec.get("chirp", 0.0)),
        )
        spec = ProblemSpec(
            dim=top.get("dim", 3),
            h=h,
            V=V,
            u0=u0,
            radius=float(top.get("radius", 16.0)),
            grid_points=top.get("grid_points", 1024),
            dt0=float(top.get("dt0", 1e-3)),
            t_end=float(top.get("t_end", 1.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return spec, dict(data.get("solver", {}))


def load_problem(path: str | Path) -> tuple[ProblemSpec, dict]:
    """Parse a TOML problem file.

    Keys may be given flat (``dim = 3``, ``h.terms = [[1, 0.5]]``) or in
    ``[h]``, ``[V]``, ``[u0]`` tables.  Parse errors carry line and column.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return problem_from_dict(data)
    except ConfigError as exc:
        where = _locate(text, str(exc))
        raise ConfigError(f"{path}: {exc}{where}") from exc


def _locate(text: str, message: str) -> str:
    """Best-effort " (at line L, column C)" for the key a validation message names."""
    words = re.findall(r"[A-Za-z_][A-Za-z0-9_]*", message)
    for word in words[:2]:
        pat = re.compile(rf"^\s*(?:[A-Za-z0-9_]+\.)?({re.escape(word)})\s*=", re.MULTILINE)
        m = pat.search(text)
        if m:
            line = text.count("\n", 0, m.start(1)) + 1
            col = m.start(1) - (text.rfind("\n", 0, m.start(1)) + 1) + 1
            return f" (at line {line}, column {col})"
    return ""


def format_problem(spec: ProblemSpec, solver: dict | None = None) -> str:
    """Serialize a ProblemSpec back to TOML text."""
    lines = [
        f"dim = {spec.dim}",
        f"radius = {spec.radius!r}",
        f"grid_points = {spec.grid_points}",
        f"dt0 = {spec.dt0!r}",
        f"t_end = {spec.t_end!r}",
        "",
        "[h]",
        "terms = [" + ", ".join(f"[{b!r}, {a!r}]" for b, a in spec.h.terms) + "]",
        "",
        "[V]",
        f"c = {spec.V.c!r}",
        f"m = {spec.V.m!r}",
        f"sign = {spec.V.sign}",
        f"bounded = {spec.V.v_bounded!r}",
        f"epsilon = {spec.V.epsilon!r}",
        "",
        "[u0]",
        f"amplitude = {spec.u0.amplitude!r}",
        f"sigma = {spec.u0.sigma!r}",
        f"chirp = {spec.u0.chirp!r}",
    ]
    if solver:
        lines += ["", "[solver]"] + [f"{k} = {v!r}" for k, v in solver.items()]
    return "\n".join(lines) + "\n"


def parse_terms(text: str) -> NonlinearitySpec:
    """Parse ``"b:alpha[,b:alpha]"``; an empty string or ``0`` gives h ≡ 0."""
    text = text.strip()
    if text in ("", "0", "none"):
        return NonlinearitySpec()
    terms: list[tuple[float, float]] = []
    for chunk in text.split(","):
        parts = chunk.split(":")
        if len(parts) != 2:
            raise ConfigError(f"bad h term {chunk!r}; expected b:alpha")
        terms.append((float(parts[0]), float(parts[1])))
    try:
        return NonlinearitySpec(tuple(terms))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_potential(text: str, epsilon: float = 1e-3) -> PotentialSpec:
    """Parse ``"sign:c:m[:bounded]"``."""
    parts: Sequence[str] = text.strip().split(":")
    if len(parts) not in (3, 4):
        raise ConfigError(f"bad potential {text!r}; expected sign:c:m[:bounded]")
    try:
        sign = int(float(parts[0]))
        c, m = float(parts[1]), float(parts[2])
        vb = float(parts[3]) if len(parts) == 4 else 0.0
        return PotentialSpec(c=c, m=m, sign=sign, v_bounded=vb, epsilon=epsilon)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
