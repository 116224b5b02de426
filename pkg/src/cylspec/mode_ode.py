"""Radial ODE layer for separated modes on the cylinder.

After separating variables, every field component reduces to radial profiles
multiplying a fixed cross-section mode.  Profiles are finite sums of
``coeff * r**p * exp(rate * r)`` terms, which is closed under every operation
the solvers need (derivative, product, definite integral, variation of
parameters), so the whole radial pipeline runs in closed form.  A sampled
fallback exists for sources that do not fit the closed-form class.

Two constant-coefficient systems appear:

* the scalar second-order equation  f'' - mu f = alpha  for coclosed
  one-form components, and
* the coupled 4x4 first-order system in the state (k, k', l, l') for the
  mixed scalar pair, whose coefficient matrix has the double characteristic
  roots +-sqrt(mu), each with a single Jordan block.

Solves select decay at both ends of the line (integral split at the origin),
which is what kills secular growth beyond a compactly supported source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput

__all__ = [
    "RadialProfile",
    "PiecewiseProfile",
    "SampledProfile",
    "SourceExpansion",
    "FundamentalMatrixSet",
    "MixedModeSolution",
    "system_matrix",
    "fundamental_matrix_set",
    "psi0_2x2",
    "psi_mu_2x2",
    "phi0_4x4",
    "phi0_4x4_inverse",
    "v_matrix",
    "v_inverse",
    "psi_mu_4x4",
    "psi_mu_4x4_inverse",
    "fundamental_matrix",
    "check_characteristic",
    "solve_scalar_mode",
    "solve_mixed_mode",
]

# Coefficients whose magnitude is exactly zero are dropped on construction;
# everything else is kept (pruning with a tolerance is always explicit).
_EXACT_ZERO = 0.0


def _falling(p: int, j: int) -> int:
    """Falling factorial p (p-1) ... (p-j+1), with _falling(p, 0) == 1."""
    out = 1
    for i in range(j):
        out *= p - i
    return out


class RadialProfile:
    """Finite sum of ``c * r**p * exp(lam * r)`` terms.

    Terms are stored merged on the key ``(p, lam)``.  Separated-mode
    solutions only ever need powers 0 and 1; intermediate arithmetic
    (tube-norm integrands, variation-of-parameters temporaries) may push the
    power higher, which is fine.
    """

    __slots__ = ("terms",)

    def __init__(self, terms=()):
        merged: dict[tuple[int, float], float] = {}
        for coeff, p, lam in terms:
            if p < 0 or p != int(p):
                raise InvalidInput(f"term power must be a nonnegative integer, got {p}")
            lam = float(lam) + 0.0  # normalizes -0.0 to 0.0
            key = (int(p), lam)
            merged[key] = merged.get(key, 0.0) + float(coeff)
        self.terms = tuple(
            (c, p, lam)
            for (p, lam), c in sorted(merged.items())
            if c != _EXACT_ZERO
        )

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls) -> "RadialProfile":
        return cls(())

    @classmethod
    def constant(cls, c: float) -> "RadialProfile":
        return cls(((c, 0, 0.0),))

    @classmethod
    def monomial(cls, coeff: float, power: int = 0, rate: float = 0.0) -> "RadialProfile":
        return cls(((coeff, power, rate),))

    # -- algebra ------------------------------------------------------------

    def __add__(self, other: "RadialProfile") -> "RadialProfile":
        return RadialProfile(self.terms + other.terms)

    def __sub__(self, other: "RadialProfile") -> "RadialProfile":
        return self + other.scale(-1.0)

    def __neg__(self) -> "RadialProfile":
        return self.scale(-1.0)

    def scale(self, a: float) -> "RadialProfile":
        return RadialProfile(tuple((c * a, p, lam) for c, p, lam in self.terms))

    def mul_monomial(self, power: int = 0, rate: float = 0.0) -> "RadialProfile":
        """Multiply by r**power * exp(rate * r)."""
        return RadialProfile(tuple((c, p + power, lam + rate) for c, p, lam in self.terms))

    def multiply(self, other: "RadialProfile") -> "RadialProfile":
        out = []
        for c1, p1, l1 in self.terms:
            for c2, p2, l2 in other.terms:
                out.append((c1 * c2, p1 + p2, l1 + l2))
        return RadialProfile(tuple(out))

    def derivative(self) -> "RadialProfile":
        out = []
        for c, p, lam in self.terms:
            if lam != 0.0:
                out.append((c * lam, p, lam))
            if p > 0:
                out.append((c * p, p - 1, lam))
        return RadialProfile(tuple(out))

    def antiderivative(self) -> "RadialProfile":
        """Termwise antiderivative (integration constant 0).

        For ``lam != 0`` uses the closed form
        ``int r^p e^{lam r} dr = e^{lam r} sum_j (-1)^j (p)_j r^{p-j} / lam^{j+1}``.
        """
        out = []
        for c, p, lam in self.terms:
            if lam == 0.0:
                out.append((c / (p + 1), p + 1, 0.0))
            else:
                for j in range(p + 1):
                    out.append((c * (-1) ** j * _falling(p, j) / lam ** (j + 1), p - j, lam))
        return RadialProfile(tuple(out))

    # -- queries ------------------------------------------------------------

    def evaluate(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for c, p, lam in self.terms:
            with np.errstate(over="ignore", under="ignore"):
                out = out + c * r**p * np.exp(lam * r)
        return out

    def __call__(self, r):
        return self.evaluate(r)

    def value_at_zero(self) -> float:
        return float(sum(c for c, p, lam in self.terms if p == 0))

    def limit_at_plus_infinity(self) -> float:
        """0 if every term decays; raises if any term grows or is constant."""
        for c, p, lam in self.terms:
            if lam > 0.0 or (lam == 0.0 and (p > 0 or c != 0.0)):
                raise InvalidInput("profile does not decay at +infinity")
        return 0.0

    def definite_integral(self, a: float, b: float) -> float:
        """Exact integral over [a, b]; b may be math.inf if the tail decays."""
        F = self.antiderivative()
        upper = F.limit_at_plus_infinity() if b == math.inf else float(F.evaluate(b))
        return upper - float(F.evaluate(a))

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c, _, _ in self.terms), default=0.0)

    def prune(self, tol: float) -> "RadialProfile":
        """Drop terms with |coeff| <= tol * max |coeff| (explicit, never automatic)."""
        cut = tol * self.max_abs_coeff()
        return RadialProfile(tuple(t for t in self.terms if abs(t[0]) > cut))

    def growing_mass(self) -> float:
        """Sum of |coeff| over terms that do not decay as r -> +infinity."""
        return sum(abs(c) for c, p, lam in self.terms if lam > 0.0 or (lam == 0.0 and p > 0))

    @property
    def max_power(self) -> int:
        return max((p for _, p, _ in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self):
        if not self.terms:
            return "RadialProfile(0)"
        bits = [f"{c:+.6g} r^{p} e^{{{lam:+.6g} r}}" for c, p, lam in self.terms]
        return "RadialProfile(" + " ".join(bits) + ")"

    def __eq__(self, other):
        return isinstance(other, RadialProfile) and self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)


class PiecewiseProfile:
    """Radial profile defined piecewise on contiguous intervals.

    Solutions of windowed-source problems live here: one closed-form piece
    inside the source window, another (purely decaying) beyond it.
    """

    __slots__ = ("pieces",)

    def __init__(self, pieces):
        pieces = sorted(pieces, key=lambda t: t[0])
        for (lo1, hi1, _), (lo2, _, _) in zip(pieces, pieces[1:]):
            if not math.isclose(hi1, lo2, rel_tol=0.0, abs_tol=1e-12):
                raise InvalidInput("piecewise profile intervals must be contiguous")
        self.pieces = tuple(pieces)

    @classmethod
    def single(cls, profile: RadialProfile, lo=-math.inf, hi=math.inf) -> "PiecewiseProfile":
        return cls([(lo, hi, profile)])

    def evaluate(self, r) -> np.ndarray:
        r_in = np.asarray(r, dtype=float)
        r = np.atleast_1d(r_in)
        out = np.zeros_like(r)
        for i, (lo, hi, prof) in enumerate(self.pieces):
            # attribute boundary points to the left piece, except the first
            if i == 0:
                mask = (r >= lo) & (r <= hi)
            else:
                mask = (r > lo) & (r <= hi)
            if np.any(mask):
                out[mask] = prof.evaluate(r[mask])
        return out.reshape(r_in.shape)

    def __call__(self, r):
        return self.evaluate(r)

    def derivative(self) -> "PiecewiseProfile":
        return PiecewiseProfile([(lo, hi, p.derivative()) for lo, hi, p in self.pieces])

    def mul_monomial(self, power: int = 0, rate: float = 0.0) -> "PiecewiseProfile":
        return PiecewiseProfile(
            [(lo, hi, p.mul_monomial(power, rate)) for lo, hi, p in self.pieces]
        )

    def piece_on(self, lo: float, hi: float) -> RadialProfile:
        """The closed-form piece covering [lo, hi]; raises if it straddles a breakpoint."""
        for plo, phi, prof in self.pieces:
            if plo - 1e-12 <= lo and hi <= phi + 1e-12:
                return prof
        raise InvalidInput(f"[{lo}, {hi}] straddles a profile breakpoint")

    def single_profile(self) -> RadialProfile:
        """The unique closed-form piece; raises when the profile is windowed."""
        if len(self.pieces) != 1:
            raise InvalidInput("profile has several pieces; no single closed form")
        return self.pieces[0][2]

    def definite_integral(self, a: float, b: float) -> float:
        total = 0.0
        for lo, hi, prof in self.pieces:
            left, right = max(a, lo), min(b, hi)
            if left < right:
                total += prof.definite_integral(left, right)
        return total


@dataclass
class SourceExpansion:
    """Per-mode radial source profiles for a separated right-hand side.

    ``scalar`` maps coclosed / harmonic modes to their alpha profile;
    ``mixed`` maps scalar-eigenfunction modes to the (beta, gamma) pair of
    the coupled system.  Keys are Mode objects from the active spectrum.
    """

    scalar: dict
    mixed: dict

    def eigenvalues(self):
        mus = {m.eigenvalue for m in self.scalar}
        mus |= {m.eigenvalue for m in self.mixed}
        return sorted(mus)


@dataclass(frozen=True)
class SampledProfile:
    """Grid samples (r_i, value_i) for sources outside the closed-form class."""

    r: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.r.shape != self.values.shape or self.r.ndim != 1:
            raise InvalidInput("sampled profile needs matching 1-d grids")

    def evaluate(self, r) -> np.ndarray:
        return np.interp(np.asarray(r, dtype=float), self.r, self.values)


# ---------------------------------------------------------------------------
# fundamental matrices
# ---------------------------------------------------------------------------


def system_matrix(mu: float) -> np.ndarray:
    """Coefficient matrix of the first-order system in (k, k', l, l').

    Row 2 encodes k'' = 2 mu k - l' (+ source), row 4 encodes
    l'' = (mu/2)(k' + l) (+ source).
    """
    return np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [2.0 * mu, 0.0, 0.0, -1.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, mu / 2.0, mu / 2.0, 0.0],
        ]
    )


def psi0_2x2(r: float) -> np.ndarray:
    """Fundamental matrix of f'' = 0 in the state (f, f')."""
    return np.array([[1.0, float(r)], [0.0, 1.0]])


def psi_mu_2x2(mu: float, r: float) -> np.ndarray:
    """Fundamental matrix of f'' = mu f, columns e^{+sr}, e^{-sr} (s = sqrt(mu))."""
    if mu <= 0:
        raise InvalidInput("psi_mu_2x2 needs mu > 0")
    s = math.sqrt(mu)
    ep, em = math.exp(s * r), math.exp(-s * r)
    return np.array([[ep, em], [s * ep, -s * em]])


def phi0_4x4(r: float) -> np.ndarray:
    """Polynomial fundamental matrix of the 4x4 system at mu = 0."""
    r = float(r)
    return np.array(
        [
            [1.0, r, 0.0, -0.5 * r * r],
            [0.0, 1.0, 0.0, -r],
            [0.0, 0.0, 1.0, r],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def phi0_4x4_inverse(r: float) -> np.ndarray:
    """Closed-form inverse of phi0_4x4 (equals phi0 with r -> -r up to the
    quadratic entry, which keeps its sign)."""
    r = float(r)
    return np.array(
        [
            [1.0, -r, 0.0, -0.5 * r * r],
            [0.0, 1.0, 0.0, r],
            [0.0, 0.0, 1.0, -r],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def v_matrix(mu: float) -> np.ndarray:
    """Columns: eigenvector and Jordan partner at +sqrt(mu), then at -sqrt(mu)."""
    if mu <= 0:
        raise InvalidInput("v_matrix needs mu > 0")
    s = math.sqrt(mu)
    return np.array(
        [
            [1.0, 0.0, -1.0, 0.0],
            [s, 1.0, s, -1.0],
            [s, -3.0, s, 3.0],
            [mu, -2.0 * s, -mu, -2.0 * s],
        ]
    )


def v_inverse(mu: float) -> np.ndarray:
    """Exact inverse of v_matrix (entries verified against V @ V^-1 = I)."""
    if mu <= 0:
        raise InvalidInput("v_inverse needs mu > 0")
    s = math.sqrt(mu)
    return np.array(
        [
            [0.5, 3.0 / (8.0 * s), 1.0 / (8.0 * s), 0.0],
            [s / 4.0, 1.0 / 8.0, -1.0 / 8.0, -1.0 / (4.0 * s)],
            [-0.5, 3.0 / (8.0 * s), 1.0 / (8.0 * s), 0.0],
            [s / 4.0, -1.0 / 8.0, 1.0 / 8.0, -1.0 / (4.0 * s)],
        ]
    )


def _exp_jordan(mu: float, r: float) -> np.ndarray:
    """exp(J r) for J = blockdiag([[s,1],[0,s]], [[-s,1],[0,-s]])."""
    s = math.sqrt(mu)
    ep, em = math.exp(s * r), math.exp(-s * r)
    out = np.zeros((4, 4))
    out[0, 0] = out[1, 1] = ep
    out[0, 1] = r * ep
    out[2, 2] = out[3, 3] = em
    out[2, 3] = r * em
    return out


def psi_mu_4x4(mu: float, r: float) -> np.ndarray:
    """Fundamental matrix V exp(J r) of the 4x4 system for mu > 0."""
    return v_matrix(mu) @ _exp_jordan(mu, float(r))


def psi_mu_4x4_inverse(mu: float, r: float) -> np.ndarray:
    return _exp_jordan(mu, -float(r)) @ v_inverse(mu)


@dataclass(frozen=True)
class FundamentalMatrixSet:
    """Bundle of the fundamental matrices for one eigenvalue.

    For mu = 0 the 4x4 slots hold the polynomial matrix and its inverse; for
    mu > 0 they hold V exp(J r).  The 2x2 slots cover the scalar equation.
    """

    mu: float

    def scalar(self, r: float) -> np.ndarray:
        return psi0_2x2(r) if self.mu == 0 else psi_mu_2x2(self.mu, r)

    def mixed(self, r: float) -> np.ndarray:
        return phi0_4x4(r) if self.mu == 0 else psi_mu_4x4(self.mu, r)

    def mixed_inverse(self, r: float) -> np.ndarray:
        return phi0_4x4_inverse(r) if self.mu == 0 else psi_mu_4x4_inverse(self.mu, r)

    @property
    def v(self) -> np.ndarray:
        return v_matrix(self.mu)

    @property
    def v_inv(self) -> np.ndarray:
        return v_inverse(self.mu)


def fundamental_matrix_set(mu: float) -> FundamentalMatrixSet:
    """Bundle of fundamental matrices for both systems at eigenvalue mu."""
    if mu < 0:
        raise InvalidInput("mu must be >= 0 (no oscillatory branch)")
    return FundamentalMatrixSet(mu=float(mu))


def fundamental_matrix(system: str, mu: float, r: float) -> np.ndarray:
    """Evaluate the fundamental matrix of the chosen system at radius r.

    ``system`` is "scalar2x2" or "mixed4x4"; mu = 0 selects the polynomial
    forms, mu > 0 the exponential ones.
    """
    fm = fundamental_matrix_set(mu)
    if system == "scalar2x2":
        return fm.scalar(r)
    if system == "mixed4x4":
        return fm.mixed(r)
    raise InvalidInput(f"unknown system {system!r}")


def check_characteristic(mu: float) -> dict:
    """Root structure of (lambda^2 - mu)^2 together with Jordan rank data.

    Returns a dict mapping each root to ``{"algebraic": a, "geometric": g}``
    plus a ``"ranks"`` entry with rank(A - root I) for each root.
    """
    A = system_matrix(mu)
    out: dict = {"roots": {}, "ranks": {}}
    roots = [0.0] if mu == 0 else [math.sqrt(mu), -math.sqrt(mu)]
    for root in roots:
        M = A - root * np.eye(4)
        rank = int(np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, mu)))
        geom = 4 - rank
        alg = 4 if mu == 0 else 2
        out["roots"][root] = {"algebraic": alg, "geometric": geom}
        out["ranks"][root] = rank
    return out


# ---------------------------------------------------------------------------
# closed-form solves
# ---------------------------------------------------------------------------


def _as_source(profile, support):
    if isinstance(profile, (int, float)):
        profile = RadialProfile.constant(float(profile))
    if not isinstance(profile, RadialProfile):
        raise InvalidInput("source must be a RadialProfile (or scalar constant)")
    if support is not None:
        lo, hi = support
        if lo != 0.0 or not hi > 0.0 or math.isinf(hi):
            raise InvalidInput("support window must be [0, hi] with 0 < hi < inf")
    return profile, support


def _integral_zero_to_r(profile: RadialProfile) -> RadialProfile:
    """int_0^r profile(s) ds as a profile in r."""
    F = profile.antiderivative()
    return F - RadialProfile.constant(F.value_at_zero())


def _integral_r_to_upper(profile: RadialProfile, upper: float) -> RadialProfile:
    """int_r_upper profile(s) ds as a profile in r (upper may be inf)."""
    F = profile.antiderivative()
    if upper == math.inf:
        top = F.limit_at_plus_infinity()
    else:
        top = float(F.evaluate(upper))
    return RadialProfile.constant(top) - F


def _restore_rates(profile: RadialProfile, anchors, tol=1e-10) -> RadialProfile:
    """Snap term rates back onto the exact anchor set.

    Variation of parameters multiplies by e^{sigma r}, integrates, and
    multiplies back; in floats the round trip lam -> (lam - sigma) + sigma
    can land one ulp off the source rate.  Mathematically the solution's
    rate support is exactly the source rates plus the homogeneous rates,
    so drifting terms are snapped to the nearest anchor, letting equal-rate
    terms merge (and cancel) instead of surviving as near-duplicates.
    """
    anchors = sorted(set(anchors))
    if not anchors:
        return profile
    out = []
    for c, p, lam in profile.terms:
        best = min(anchors, key=lambda a: abs(lam - a))
        if abs(lam - best) <= tol * max(1.0, abs(best)):
            lam = best
        out.append((c, p, lam))
    return RadialProfile(tuple(out))


def solve_scalar_mode(mu: float, alpha, support=None):
    """Decaying solution of f'' - mu f = alpha on the half line.

    For mu > 0 this is the convolution with -e^{-sqrt(mu)|r-s|}/(2 sqrt(mu));
    for mu = 0 it is the double integration with zero data at r = 0 (the
    canonical complement choice for the finite sector).

    ``support=(lo, hi)`` restricts the source to a window; the result is then
    piecewise, with a purely decaying (mu > 0) or affine (mu = 0) tail.
    Global sources must decay strictly faster than e^{-0 r} is not enough:
    every rate has to satisfy lam < sqrt(mu) for the upper tail to converge.
    Returns a PiecewiseProfile.
    """
    alpha, support = _as_source(alpha, support)
    if mu < 0:
        raise InvalidInput("mu must be >= 0")

    if mu == 0.0:
        # f = r * int_0^r alpha - int_0^r s alpha  (zero data at r = 0)
        body = _integral_zero_to_r(alpha).mul_monomial(1, 0.0) - _integral_zero_to_r(
            alpha.mul_monomial(1, 0.0)
        )
        if support is None:
            return PiecewiseProfile.single(body, lo=0.0)
        _, hi = support
        A = alpha.definite_integral(0.0, hi)
        B = alpha.mul_monomial(1, 0.0).definite_integral(0.0, hi)
        tail = RadialProfile(((A, 1, 0.0), (-B, 0, 0.0)))
        return PiecewiseProfile([(0.0, hi, body), (hi, math.inf, tail)])

    s = math.sqrt(mu)
    anchors = [0.0, s, -s] + [lam for _, _, lam in alpha.terms]
    if support is None:
        for _, p, lam in alpha.terms:
            if lam >= s:
                raise InvalidInput("global source must decay strictly below rate sqrt(mu)")
        down = _integral_zero_to_r(alpha.mul_monomial(0, s)).mul_monomial(0, -s)
        up = _integral_r_to_upper(alpha.mul_monomial(0, -s), math.inf).mul_monomial(0, s)
        f = _restore_rates((down + up).scale(-1.0 / (2.0 * s)), anchors)
        return PiecewiseProfile.single(f, lo=0.0)

    _, hi = support
    down_body = _integral_zero_to_r(alpha.mul_monomial(0, s)).mul_monomial(0, -s)
    up_body = _integral_r_to_upper(alpha.mul_monomial(0, -s), hi).mul_monomial(0, s)
    body = _restore_rates((down_body + up_body).scale(-1.0 / (2.0 * s)), anchors)
    c_decay = alpha.mul_monomial(0, s).definite_integral(0.0, hi)
    tail = RadialProfile(((-c_decay / (2.0 * s), 0, -s),))
    return PiecewiseProfile([(0.0, hi, body), (hi, math.inf, tail)])


@dataclass
class MixedModeSolution:
    """Solution of the coupled mixed-pair system for one eigenvalue.

    ``k`` multiplies the tangential-gradient leg, ``l`` the radial leg.
    ``state(r)`` evaluates the full (k, k', l, l') vector.
    """

    mu: float
    k: PiecewiseProfile
    l: PiecewiseProfile
    kp: PiecewiseProfile = field(repr=False, default=None)
    lp: PiecewiseProfile = field(repr=False, default=None)

    def __iter__(self):
        # supports unpacking as (k, l)
        return iter((self.k, self.l))

    def state(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.stack(
            [self.k.evaluate(r), self.kp.evaluate(r), self.l.evaluate(r), self.lp.evaluate(r)]
        )

    def residual(self, beta, gamma, r) -> float:
        """Max-norm residual of the two second-order equations on a grid."""
        r = np.asarray(r, dtype=float)
        kpp = self.kp.derivative().evaluate(r)
        lpp = self.lp.derivative().evaluate(r)
        res1 = kpp - 2.0 * self.mu * self.k.evaluate(r) + self.lp.evaluate(r) - beta.evaluate(r)
        res2 = lpp - 0.5 * self.mu * (self.kp.evaluate(r) + self.l.evaluate(r)) - gamma.evaluate(r)
        return float(max(np.max(np.abs(res1)), np.max(np.abs(res2))))


def _vop_block(q_tilde_1, q_tilde_2, sigma, upper=None):
    """Closed-form variation-of-parameters integral for one Jordan block.

    Computes ``int e^{sigma (t - s)} [q1(s) + (t - s) q2(s)] ds`` and
    ``int e^{sigma (t - s)} q2(s) ds``, over [0, t] when ``upper`` is None
    and over [t, upper] otherwise, returning the pair (y1, y2) as profiles
    in t.
    """

    def integ(prof):
        shifted = prof.mul_monomial(0, -sigma)
        if upper is None:
            return _integral_zero_to_r(shifted)
        return _integral_r_to_upper(shifted, upper)

    i1 = integ(q_tilde_1)
    i2 = integ(q_tilde_2)
    i2s = integ(q_tilde_2.mul_monomial(1, 0.0))

    # y1 = e^{sigma t} [ i1 + t i2 - int s e^{-sigma s} q2 ]
    y1 = (i1 + i2.mul_monomial(1, 0.0) - i2s).mul_monomial(0, sigma)
    y2 = i2.mul_monomial(0, sigma)
    return y1, y2


def _mixed_solution_profiles(mu, beta, gamma, upper):
    """State profiles (closed form) of x' = A x + (0, beta, 0, gamma).

    ``upper`` is the upper integration limit for the growing-block part:
    math.inf for globally decaying sources, the window end for compactly
    supported ones.  Decay at both ends fixes the split: decaying-block
    coefficients integrate up from 0, growing-block coefficients integrate
    down from ``upper``.
    """
    s = math.sqrt(mu)
    V = v_matrix(mu)
    Vinv = v_inverse(mu)

    # components of V^-1 q with q = (0, beta, 0, gamma)
    qt = [
        beta.scale(Vinv[i, 1]) + gamma.scale(Vinv[i, 3])
        for i in range(4)
    ]

    y1m, y2m = _vop_block(qt[2], qt[3], -s)
    y1p, y2p = _vop_block(qt[0], qt[1], +s, upper=upper)

    anchors = (
        [0.0, s, -s]
        + [lam for _, _, lam in beta.terms]
        + [lam for _, _, lam in gamma.terms]
    )
    x = []
    for i in range(4):
        xi = (
            y1m.scale(V[i, 2])
            + y2m.scale(V[i, 3])
            - (y1p.scale(V[i, 0]) + y2p.scale(V[i, 1]))
        )
        x.append(_restore_rates(xi, anchors))
    return x


def _tail_profiles(mu, beta, gamma, hi):
    """Beyond a source window only the decaying block survives; build it
    directly so no growing basis term ever enters the tail piece."""
    s = math.sqrt(mu)
    V = v_matrix(mu)
    Vinv = v_inverse(mu)
    qt2 = beta.scale(Vinv[2, 1]) + gamma.scale(Vinv[2, 3])
    qt3 = beta.scale(Vinv[3, 1]) + gamma.scale(Vinv[3, 3])
    # coefficients c = int_0^hi e^{-J_- s} (qt2, qt3) ds, J_- the decaying block
    c2 = (
        qt2.mul_monomial(0, s).definite_integral(0.0, hi)
        - qt3.mul_monomial(1, s).definite_integral(0.0, hi)
    )
    c3 = qt3.mul_monomial(0, s).definite_integral(0.0, hi)
    x = []
    for i in range(4):
        # x_i(r) = e^{-s r} [ (c2 + r c3) V[i,2] + c3 V[i,3] ]
        x.append(
            RadialProfile(
                (
                    (c2 * V[i, 2] + c3 * V[i, 3], 0, -s),
                    (c3 * V[i, 2], 1, -s),
                )
            )
        )
    return x


def solve_mixed_mode(mu: float, beta, gamma, support=None) -> MixedModeSolution:
    """Decaying solution of the 4x4 system with source (0, beta, 0, gamma).

    Globally supported sources must have every rate strictly below sqrt(mu)
    (and above -infinity; sub-exponential growth is rejected).  With
    ``support=(lo, hi)`` the source is windowed and the returned profiles are
    piecewise; the tail piece beyond ``hi`` is assembled from the decaying
    Jordan block alone, so it contains no growing or secular term by
    construction, not by cancellation.
    """
    beta, _ = _as_source(beta, support)
    gamma, support = _as_source(gamma, support)
    if mu <= 0.0:
        # the mu = 0 pair never carries a source in this pipeline (harmonic
        # cross-section data is routed to the finite-dimensional sector)
        raise InvalidInput("solve_mixed_mode needs mu > 0; mu = 0 belongs to the finite sector")

    s = math.sqrt(mu)
    if support is None:
        for prof in (beta, gamma):
            for _, p, lam in prof.terms:
                if lam >= s:
                    raise InvalidInput(
                        "global mixed source must decay strictly below rate sqrt(mu)"
                    )
        x = _mixed_solution_profiles(mu, beta, gamma, math.inf)
        pieces = [PiecewiseProfile.single(prof, lo=0.0) for prof in x]
    else:
        lo, hi = support
        body = _mixed_solution_profiles(mu, beta, gamma, hi)
        tail = _tail_profiles(mu, beta, gamma, hi)
        pieces = [
            PiecewiseProfile([(0.0, hi, b), (hi, math.inf, t)])
            for b, t in zip(body, tail)
        ]

    return MixedModeSolution(mu=mu, k=pieces[0], l=pieces[2], kp=pieces[1], lp=pieces[3])
