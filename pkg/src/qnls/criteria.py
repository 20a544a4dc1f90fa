"""Analytic criteria: critical exponents, (C1)/(C2), S(I)/S(II), case selection.

Every threshold is computed with plain arithmetic on its inputs, so passing
``fractions.Fraction`` (or int) exponents gives exact rational results and
floats give floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Optional

import numpy as np

from .model import NonlinearitySpec, PotentialSpec

INF = math.inf

NONNEG = "nonneg"
NONPOS = "nonpos"
INDEFINITE = "indefinite"


class HypothesisError(ValueError):
    """A theorem's hypothesis does not hold for the given data."""


class CriteriaUsageError(ValueError):
    pass


def _div(a, b):
    if isinstance(a, Rational) and isinstance(b, Rational):
        return Fraction(a) / Fraction(b)
    return a / b


def two_star(N):
    """Sobolev exponent 2* = 2N/(N-2)."""
    if N < 3:
        raise ValueError("N must be >= 3")
    return _div(2 * N, N - 2)


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class SobolevConstants:
    N: int
    two_star: float
    C_s: float


@dataclass(frozen=True)
class HConstants:
    k: object
    alpha: object
    a: float
    k1: object = None
    bracket_sign: str = NONNEG
    alphas: tuple = ()

    @property
    def is_zero(self) -> bool:
        return not self.alphas

    @classmethod
    def power(cls, alpha, b=1) -> "HConstants":
        """Constants of h(s) = b s^alpha, exact for rational alpha."""
        if not alpha > 0:
            raise ValueError("alpha must be > 0")
        k1 = 1 - 2 * alpha if 2 * alpha < 1 else None
        return cls(
            k=alpha - 1,
            alpha=alpha,
            a=_growth_constant(((float(b), float(alpha)),)),
            k1=k1,
            bracket_sign=NONNEG if 2 * alpha >= 1 else NONPOS,
            alphas=(alpha,),
        )


ZERO_H = HConstants(k=Fraction(-1, 2), alpha=Fraction(1, 2), a=1.0, k1=None, bracket_sign=NONNEG, alphas=())


def _growth_constant(terms) -> float:
    """Smallest sampled a with max(s^½, s^α) <= a [h(s) + s^½] on s in [1, 1e6], times 1.01."""
    s = np.logspace(0.0, 6.0, 2001)
    alpha = max(a for _, a in terms)
    h = sum(b * s**a for b, a in terms)
    ratio = np.maximum(np.sqrt(s), s**alpha) / (h + np.sqrt(s))
    return float(1.01 * ratio.max())


def extract_h_constants(h: NonlinearitySpec) -> HConstants:
    """k, alpha, a, k1 and the sign of 2h''h's + h'² for a power sum."""
    if h.is_zero:
        return ZERO_H
    alphas = h.alphas
    top = max(alphas)
    low = min(alphas)
    # 2h''h's + h'² = Σ_ij b_i b_j α_i α_j (α_i + α_j - 1) s^(α_i+α_j-2):
    # the pair sums range over [2 low, 2 top]
    if 2 * low >= 1:
        sign = NONNEG
    elif 2 * top <= 1:
        sign = NONPOS
    else:
        sign = INDEFINITE
    k1 = 1 - 2 * low if 2 * top < 1 else None
    return HConstants(k=top - 1, alpha=top, a=_growth_constant(h.terms), k1=k1, bracket_sign=sign, alphas=alphas)


# ---------------------------------------------------------------------------
# exponents


def critical_exponent(alpha, N):
    """q_c = 2*/(max(2α, 1) 2* - 2)."""
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    ts = two_star(N)
    return _div(ts, max(2 * alpha, 1) * ts - 2)


def _potential_parts(V):
    if isinstance(V, PotentialSpec):
        return V.c, V.m, V.sign, V.v_bounded
    return 1, V, 1, 0


def potential_q_sup(V, N):
    """sup{q : V in L^q + L^inf}: N/m for a power law, inf when bounded.

    ``V`` is a PotentialSpec or the bare exponent m.
    """
    c, m, _, _ = _potential_parts(V)
    if c == 0 or m == 0:
        return INF
    return _div(N, m)


def classify_SI_SII(h: HConstants, V, N) -> str:
    q_c = critical_exponent(h.alpha, N)
    q_sup = potential_q_sup(V, N)
    if q_sup > q_c:
        return "S(I)"
    if q_sup < q_c:
        return "S(II)"
    return "borderline"


def c1_threshold(h: HConstants, N):
    """max((2k+1)N, 0) + 2."""
    return max((2 * h.k + 1) * N, 0) + 2


def check_C1(h: HConstants, V: PotentialSpec, N) -> tuple[bool, object]:
    """(C1): [max((2k+1)N,0)+2] V + x·∇V <= 0 for V = sign c r^-m + v_bounded.

    x·∇V = -m (singular part), so the singular part contributes
    (threshold - m) sign c r^-m and the constant part threshold·v_bounded.
    """
    thr = c1_threshold(h, N)
    c, m, sign = V.c, V.m, V.sign
    if c == 0:
        const = V.v_bounded
        sing_ok = True
    elif m == 0:
        const = V.v_bounded + sign * c
        sing_ok = True
    else:
        const = V.v_bounded
        sing_ok = (thr - m) * sign <= 0
    return bool(sing_ok and thr * const <= 0), thr


def check_C2(h: HConstants, q, N, *, q_is_sup: bool = False) -> bool:
    """(C2): q > 1 and q >= q_c.

    With ``q_is_sup`` the argument is a supremum that is not attained
    (V in L^q + L^inf for every q below it), so both tests become strict.
    """
    q_c = critical_exponent(h.alpha, N)
    if q_is_sup:
        return bool(q > 1 and q > q_c)
    return bool(q > 1 and q >= q_c)


# ---------------------------------------------------------------------------
# Theorem 2


@dataclass
class CaseVerdict:
    case: str
    reasons: list[str] = field(default_factory=list)
    smallness_ok: Optional[bool] = None
    open_problem: bool = False


def theorem2_case(h: HConstants, q, N, V1_norm=None, *, q_is_sup: bool = False,
                  sobolev: SobolevConstants | None = None) -> CaseVerdict:
    """Select case (i)-(iv) of the global-existence theorem for V >= 0 or sign-changing.

    ``V1_norm`` is ||V1||_{L^{N/2}} and is needed only in case (ii).  With
    ``q_is_sup`` the exponent is an unattained supremum: conditions "q > X"
    and "q >= X" both read X < q, and case (ii) (q exactly N/2) cannot occur.
    Case (iii) is strict in q; q = q_c there is reported as the open problem.
    """
    alpha = h.alpha
    q_c = critical_exponent(alpha, N)
    if not check_C2(h, q, N, q_is_sup=q_is_sup):
        if q_is_sup and q == q_c and 1 < q:
            return CaseVerdict("none", [f"q_sup = q_c = {_fmt(q_c)}: no admissible q (borderline)"],
                               open_problem=2 * alpha > 1 and alpha * N < N - 1)
        return CaseVerdict("none", [f"(C2) fails: need q > 1 and q >= q_c = {_fmt(q_c)}"])

    def ge(x):
        return x < q if q_is_sup else q >= x

    def gt(x):
        return x < q if q_is_sup else q > x

    half_N = _div(N, 2)
    if 2 * alpha <= 1:
        if gt(half_N):
            return CaseVerdict("i", [f"alpha <= 1/2 and q > N/2 = {_fmt(half_N)}"])
        if not q_is_sup and q == half_N:
            if V1_norm is None:
                raise CriteriaUsageError("case (ii) needs the L^{N/2} norm of V1")
            sob = sobolev or sobolev_constants(N)
            value = sob.C_s ** (2.0 / float(sob.two_star)) * float(V1_norm)
            ok = value < 1.0
            return CaseVerdict("ii", [f"alpha <= 1/2, q = N/2, C_s^(2/2*) ||V1|| = {value:.6g}"], smallness_ok=ok)
        return CaseVerdict("none", ["alpha <= 1/2 but q < N/2"])
    if alpha * N < N - 1:
        if gt(q_c):
            return CaseVerdict("iii", [f"1/2 < alpha < (N-1)/N and q > q_c = {_fmt(q_c)}"])
        return CaseVerdict("none", [f"q = q_c = {_fmt(q_c)} with 1/2 < alpha < (N-1)/N is left open"],
                           open_problem=True)
    ts = two_star(N)
    q_iv = _div(alpha * ts, alpha * ts - 1)
    if ge(q_iv):
        return CaseVerdict("iv", [f"alpha >= (N-1)/N and q >= alpha 2*/(alpha 2* - 1) = {_fmt(q_iv)}"])
    return CaseVerdict("none", [f"alpha >= (N-1)/N but q < {_fmt(q_iv)}"])


# ---------------------------------------------------------------------------
# Sobolev constant


def _bubble_quotient(N: int, M: int, R: float, scale: float = 1.0) -> float:
    """∫w^{2*} / (∫|∇w|²)^{2*/2} for w = (1 + (r/scale)²)^{-(N-2)/2} on [0, R].

    Midpoint rule on M cells plus the leading-order tails beyond R.
    """
    ts = 2.0 * N / (N - 2)
    dr = R / M
    r = (np.arange(M) + 0.5) * dr
    x = r / scale
    base = 1.0 + x * x
    w_pow = base ** (-N)  # w^{2*}
    dw2 = ((N - 2) * x / scale) ** 2 * base ** (-N)  # |w'|²
    shell = r ** (N - 1) * dr
    num = float(np.dot(w_pow, shell))
    den = float(np.dot(dw2, shell))
    # tails: w^{2*} ~ (r/scale)^{-2N}, |w'|² ~ (N-2)² scale^{2N-4} r^{2-2N}
    num += scale ** (2 * N) * R ** (-N) / N
    den += (N - 2) * scale ** (2 * N - 4) * R ** (2 - N)
    surface = 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)
    return surface * num / (surface * den) ** (ts / 2)


@lru_cache(maxsize=None)
def sobolev_best_constant(N: int, M: int = 2**15, R: float = 1e3) -> float:
    """C_s in ∫w^{2*} <= C_s (∫|∇w|²)^{2*/2}, from the extremal bubble."""
    if N < 3:
        raise ValueError("N must be >= 3")
    return _bubble_quotient(N, M, R)


def sobolev_constants(N: int) -> SobolevConstants:
    return SobolevConstants(N, float(two_star(N)), sobolev_best_constant(N))


# ---------------------------------------------------------------------------
# Theorem 4, Theorem 1 bound, Proposition 3.1


@dataclass
class Theorem4Verdict:
    case: Optional[int]
    k1: object = None
    c: object = None
    predicted_l: object = None
    reasons: list[str] = field(default_factory=list)


def theorem4_case(h: HConstants, V: PotentialSpec, N) -> Theorem4Verdict:
    """Decay case (1)-(4) for V = -c r^-m (V <= 0) and the predicted rate l."""
    if V.sign > 0 and V.c > 0 or V.v_bounded > 0:
        return Theorem4Verdict(None, reasons=["Theorem 4 part 1 requires V(x)<=0"])
    reasons = []
    if V.c == 0 and V.v_bounded == 0:
        pot_nonneg, c = True, None  # 2V + x·∇V = 0
    elif V.v_bounded != 0 or V.m == 0:
        return Theorem4Verdict(None, reasons=["a constant negative part gives 2V + x·∇V = 2V, outside -c|V| with c < 2"])
    elif V.m >= 2:
        pot_nonneg, c = True, None  # (2 - m) V >= 0
    else:
        pot_nonneg, c = False, 2 - V.m
        reasons.append(f"c = 2 - m = {_fmt(c)}")
    if h.bracket_sign == NONNEG:
        quasi_nonneg, k1 = True, None
    elif h.bracket_sign == NONPOS:
        k1 = h.k1
        if k1 is None or not (0 < k1 and k1 * N < 2):
            return Theorem4Verdict(None, reasons=[f"k1 = {_fmt(k1)} must lie in (0, 2/N)"])
        quasi_nonneg = False
        reasons.append(f"k1 = {_fmt(k1)} < 2/N")
    else:
        return Theorem4Verdict(None, reasons=["2h''h's + h'^2 changes sign"])
    if quasi_nonneg and pot_nonneg:
        return Theorem4Verdict(1, None, None, 2, reasons or ["bracket >= 0 and 2V + x·∇V >= 0"])
    if quasi_nonneg:
        return Theorem4Verdict(2, None, c, 2 - c, reasons)
    if pot_nonneg:
        return Theorem4Verdict(3, k1, None, 2 - N * k1, reasons)
    return Theorem4Verdict(4, k1, c, 2 - max(N * k1, c), reasons)


def blowup_time_bound(J0, y0):
    """J(0)/(4 y(0)): the solution blows up before this time."""
    if not y0 > 0:
        raise HypothesisError("blowup bound needs y(0) = Im ∫ conj(u0) x·∇u0 > 0")
    return _div(J0, 4 * y0)


def chirped_gaussian_bound(beta):
    """1/(8β), since y(0) = 2β J(0) for A exp(-r²/2σ²) exp(iβr²)."""
    if not beta > 0:
        raise HypothesisError("chirp must be positive")
    return _div(1, 8 * beta)


def theorem4_blowup_hypothesis(E0, J0, y0, T) -> dict[str, float]:
    """Both constants in front of T² E(u0) that appear for the blowup lower bound.

    Returns the values of -4T²E - J0 - 4Ty0 and -8T²E - J0 - 4Ty0; the
    hypothesis holds for a given constant when its value is positive.
    """
    return {
        "minus4T2E": -4 * T * T * E0 - J0 - 4 * T * y0,
        "minus8T2E": -8 * T * T * E0 - J0 - 4 * T * y0,
    }


@dataclass
class Prop31Verdict:
    verdict: str  # global | blowup-capable | indeterminate
    item: str
    threshold: object = None
    side_conditions: list[str] = field(default_factory=list)

    @property
    def label(self) -> str:
        if self.item.startswith("("):
            return f"Prop. 3.1{self.item}"
        return f"Prop. 3.1 item {self.item}"


def proposition31_verdict(b, alpha, m, N) -> Prop31Verdict:
    """Global / blowup verdict for h = b s^alpha (b = 0: h ≡ 0) with V = +r^-m."""
    if b < 0:
        raise ValueError("b must be >= 0")
    global_side = ["0 < E(u0) < inf"]
    blow_side = ["E(u0) < 0", "x u0 in L^2", "Im ∫ conj(u0) x·∇u0 >= 0"]
    if b == 0:
        if m < 2:
            return Prop31Verdict("global", "1", 2, global_side)
        return Prop31Verdict("blowup-capable", "1", 2, ["E(u0) < 0"])
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    ts = two_star(N)
    if 2 * alpha <= 1:
        if m < 2:
            return Prop31Verdict("global", "(i)", 2, global_side)
        return Prop31Verdict("indeterminate", "(i)", 2)
    if alpha * N < N - 1:
        thr = _div(N * (2 * alpha * ts - 2), ts)
        if m < thr:
            return Prop31Verdict("global", "(ii)", thr, global_side)
        return Prop31Verdict("blowup-capable", "(ii)", thr, blow_side)
    thr = _div(N * (alpha * ts - 1), alpha * ts)
    if m < thr:
        return Prop31Verdict("global", "(iii)", thr, ["any u0"])
    return Prop31Verdict("indeterminate", "(iii)", thr)


# ---------------------------------------------------------------------------
# Theorem 5 exponents


def power_sum_m_exponents(alphas, r_bar, N):
    """(m1, m2) = (min α · 2*/r̄, max α · 2*/r̄) for a power-sum h."""
    ts = two_star(N)
    return _div(min(alphas) * ts, r_bar), _div(max(alphas) * ts, r_bar)


def spacetime_thresholds(r_bar, m1, m2, l, N):
    if not r_bar > 2:
        raise ValueError("r_bar must be > 2")
    ts = two_star(N)
    t1 = _div(2 * r_bar * (m1 * r_bar - 2), ts * l * (r_bar - 2))
    t2 = _div(2 * r_bar * (m2 * r_bar - 2), ts * l * (r_bar - 2))
    return t1, t2


def spacetime_exponent_check(q, q_bar, r_bar, m1, m2, l, N) -> bool:
    """r̄ > 2, m1, m2 > 1 and q above both thresholds 2r̄(m r̄ - 2)/(2* l (r̄ - 2))."""
    t1, t2 = spacetime_thresholds(r_bar, m1, m2, l, N)
    if not (q_bar >= 1):
        raise ValueError("q_bar must be >= 1")
    return bool(m1 > 1 and m2 > 1 and q > t1 and q > t2)


# ---------------------------------------------------------------------------
# report


@dataclass
class ClassificationReport:
    N: int
    q_c: object
    q_sup_of_V: object
    set_membership: str
    c1_holds: bool
    c1_threshold: object
    thm1_applicable: bool
    thm1_reasons: list[str]
    thm2_case: str
    thm2_reasons: list[str]
    thm4_case: Optional[int]
    thm4_reasons: list[str]
    predicted_l: object = None
    blowup_bound: Optional[float] = None
    smallness_ok: Optional[bool] = None
    prop31: Optional[Prop31Verdict] = None
    thm4_blowup: Optional[dict] = None

    def summary(self) -> str:
        parts = [self.set_membership]
        if self.thm2_case not in ("none", ""):
            parts.append(f"Theorem 2 case ({self.thm2_case})")
        if self.thm1_applicable:
            failed = [r.split(":")[0] for r in self.thm1_reasons if r.endswith(": false")]
            if failed:
                parts.append("(C1) holds but Theorem 1 needs " + " and ".join(failed))
            else:
                parts.append("Theorem 1 applicable given E(u0)<0, y(0)>0")
        if self.prop31 is not None and self.prop31.verdict != "indeterminate":
            parts.append(f"{self.prop31.verdict} per {self.prop31.label}")
        return "; ".join(parts)

    def to_text(self) -> str:
        lines = [
            f"summary: {self.summary()}",
            f"critical exponent q_c = {_fmt(self.q_c)}",
            f"V in L^q + L^inf for q < {_fmt(self.q_sup_of_V)}",
            f"class: {self.set_membership}",
            f"(C1): {'holds' if self.c1_holds else 'fails'} (threshold m = {_fmt(self.c1_threshold)})",
            f"Theorem 1: {'applicable' if self.thm1_applicable else 'not applicable'}",
        ]
        lines += [f"  - {r}" for r in self.thm1_reasons]
        lines.append(f"Theorem 2: case {self.thm2_case}")
        lines += [f"  - {r}" for r in self.thm2_reasons]
        if self.smallness_ok is not None:
            lines.append(f"  smallness condition: {'ok' if self.smallness_ok else 'violated'}")
        t4 = "none" if self.thm4_case is None else f"({self.thm4_case}), l = {_fmt(self.predicted_l)}"
        lines.append(f"Theorem 4: case {t4}")
        lines += [f"  - {r}" for r in self.thm4_reasons]
        if self.prop31 is not None:
            p = self.prop31
            lines.append(f"{p.label}: {p.verdict} (threshold m = {_fmt(p.threshold)})")
            lines += [f"  - needs {s}" for s in p.side_conditions]
        if self.blowup_bound is not None:
            lines.append(f"blowup before t = {_fmt(self.blowup_bound)}")
        if self.thm4_blowup is not None:
            for key, val in self.thm4_blowup.items():
                lines.append(f"blowup-rate hypothesis {key}: {_fmt(val)} ({'holds' if val > 0 else 'fails'})")
        return "\n".join(lines) + "\n"

    def to_keyvalue(self) -> str:
        items = [
            ("N", self.N),
            ("q_c", self.q_c),
            ("q_sup_of_V", self.q_sup_of_V),
            ("set_membership", self.set_membership),
            ("c1_holds", self.c1_holds),
            ("c1_threshold", self.c1_threshold),
            ("thm1_applicable", self.thm1_applicable),
            ("thm2_case", self.thm2_case),
            ("thm4_case", self.thm4_case if self.thm4_case is not None else "none"),
            ("predicted_l", self.predicted_l),
            ("blowup_bound", self.blowup_bound),
            ("smallness_ok", self.smallness_ok),
            ("prop31", self.prop31.verdict if self.prop31 else None),
            ("prop31_threshold", self.prop31.threshold if self.prop31 else None),
        ]
        return "".join(f"{k}={_fmt(v)}\n" for k, v in items)


def _fmt(x) -> str:
    if x is None:
        return "none"
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return f"{x:.12g}"
    return str(x)


def classify(N: int, h: NonlinearitySpec, V: PotentialSpec, *, q=None, V1_norm=None,
             J0=None, y0=None, E0=None) -> ClassificationReport:
    """Run every applicable criterion; ``q`` defaults to V's (unattained) supremum."""
    hc = extract_h_constants(h)
    q_c = critical_exponent(hc.alpha, N)
    q_sup = potential_q_sup(V, N)
    membership = classify_SI_SII(hc, V, N)
    c1, thr = check_C1(hc, V, N)
    q_is_sup = q is None
    q_eff = q_sup if q_is_sup else q
    if not q_is_sup and q > q_sup:
        raise CriteriaUsageError(f"V is not in L^{q} + L^inf (needs q < {_fmt(q_sup)})")

    thm1_reasons = [f"(C1) {'holds' if c1 else 'fails'}"]
    integrable = (q_eff > 1) if not q_is_sup else (q_sup > 1)
    if not integrable:
        thm1_reasons.append("no q > 1 with V in L^q + L^inf")
    if E0 is not None:
        thm1_reasons.append(f"E(u0) <= 0: {str(E0 <= 0).lower()}")
    if y0 is not None:
        thm1_reasons.append(f"y(0) > 0: {str(y0 > 0).lower()}")
    thm1 = bool(c1 and integrable)

    V_nonpos = V.sign < 0 or V.c == 0
    V_nonpos = V_nonpos and V.v_bounded <= 0
    if V_nonpos and V.c + abs(V.v_bounded) > 0 and integrable:
        t2 = CaseVerdict("part 1", ["V <= 0 with q > 1: global for 0 < E(u0) < inf"])
    else:
        t2 = theorem2_case(hc, q_eff, N, V1_norm, q_is_sup=q_is_sup)
    t4 = theorem4_case(hc, V, N)

    prop = None
    if V.sign > 0 and V.c > 0 and V.v_bounded == 0 and len(hc.alphas) <= 1:
        b = 0 if hc.is_zero else 1
        prop = proposition31_verdict(b, hc.alpha, V.m, N)

    bound = None
    thm4b = None
    if J0 is not None and y0 is not None and y0 > 0:
        bound = blowup_time_bound(J0, y0)
        if E0 is not None:
            thm4b = theorem4_blowup_hypothesis(E0, J0, y0, bound)
    return ClassificationReport(
        N=N, q_c=q_c, q_sup_of_V=q_sup, set_membership=membership,
        c1_holds=c1, c1_threshold=thr, thm1_applicable=thm1, thm1_reasons=thm1_reasons,
        thm2_case=t2.case, thm2_reasons=t2.reasons, thm4_case=t4.case, thm4_reasons=t4.reasons,
        predicted_l=t4.predicted_l, blowup_bound=bound, smallness_ok=t2.smallness_ok,
        prop31=prop, thm4_blowup=thm4b,
    )
