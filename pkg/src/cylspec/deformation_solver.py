"""Kernel analysis for the linearized Ricci operator on the cylinder.

The pipeline: split off the affine part of a harmonic trace, absorb the
oscillating trace into a gauge field with an explicit closed-form Lie
derivative, enumerate the kernel basis of the reduced per-mode systems,
and classify a given kernel element into its unique coefficient set
(pure trace, parallel and exponential TT parts, gauge content).

Structure of the kernel over a flat torus cross section, per positive
scalar eigenvalue mu with s = sqrt(mu):

* four gauge directions L_X g0 from the homogeneous mixed-pair system
  (columns of the fundamental matrix: e^{+-s r} times a Jordan ramp),
* two gauge directions L_{e^{+-s r} eta} g0 per coclosed 1-form mode,
* two transverse-traceless directions e^{+-s r} B per TT mode,

and in the frequency-zero sector: the affine pure trace (a + a~ r) g_N,
affine parallel TT blocks, and, only at tau = 0, the radially parallel
gauge tensors eta (x) dr + dr (x) eta and dr (x) dr.  The tau term
removes exactly those last two families, which is the point of the
perturbation.

Oscillatory kernel branches would require a negative cross-section
eigenvalue; on flat tori none exist and the classifier carries the slot
only as an always-empty map behind a loud guard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fields as fields_mod
from .cross_section import Mode, TorusCrossSection, build_spectrum
from .divergence_solver import (
    GaugeField,
    _coclosed_mode,
    _growth_class,
    _harmonic_mode,
    _scalar_mode,
    lie_derivative_metric,
    modified_divergence,
)
from .errors import InvalidInput, InvalidParams, NotInKernel, ResonantTau
from .fields import TensorField, linearized_ricci
from .mode_ode import RadialProfile, v_matrix

__all__ = [
    "DeformationTensor",
    "KernelBasisElement",
    "KernelDecomposition",
    "linearized_ricci",
    "harmonic_trace_split",
    "trace_absorption_field",
    "solve_reduced_system",
    "classify_kernel",
    "parallel_space_dimension",
]

RESONANCE_TOL = 1e-6
KERNEL_TOL = 1e-8
FIT_NODES = 12


# ---------------------------------------------------------------------------
# structural view of a rank-2 expansion
# ---------------------------------------------------------------------------


def _as_field(h) -> TensorField:
    if isinstance(h, DeformationTensor):
        return h.field
    if isinstance(h, TensorField):
        return h
    raise InvalidInput("expected a rank-2 tensor field")


@dataclass(frozen=True)
class DeformationTensor:
    """A rank-2 expansion with its three structural blocks exposed.

    Every separated term falls into exactly one block: the tangential
    block f(r) eta1 (x) eta2, the mixed block k(r) eta (x) dr, and the
    radial block l(r) phi dr (x) dr.  The split is a pointwise partition
    of the coefficient tensor, so the three parts always sum back to the
    original field.
    """

    field: TensorField

    def __post_init__(self):
        if not isinstance(self.field, TensorField) or self.field.rank != 2:
            raise InvalidInput("DeformationTensor wraps a rank-2 field")

    def _block(self, which: str) -> TensorField:
        out = TensorField(self.field.cs, 2)
        for key, prof_key, C in self.field.terms():
            M = np.zeros_like(C)
            if which == "tangential":
                M[1:, 1:] = C[1:, 1:]
            elif which == "mixed":
                M[0, 1:] = C[0, 1:]
                M[1:, 0] = C[1:, 0]
            else:
                M[0, 0] = C[0, 0]
            if np.any(M != 0.0):
                out._accumulate(key, prof_key, M)
        return out

    @property
    def tangential(self) -> TensorField:
        return self._block("tangential")

    @property
    def mixed(self) -> TensorField:
        return self._block("mixed")

    @property
    def radial(self) -> TensorField:
        return self._block("radial")

    def trace(self) -> TensorField:
        return fields_mod.trace(self.field)

    def divergence(self) -> TensorField:
        return fields_mod.divergence(self.field)


# ---------------------------------------------------------------------------
# harmonic trace handling
# ---------------------------------------------------------------------------


def harmonic_trace_split(h, tol: float = 1e-10):
    """Split the trace of h into its affine part and the oscillating rest.

    Returns (affine, remainder): affine is the frequency-zero profile
    c0 + c0~ r of tr h, and remainder is h minus affine/(dim+1) times the
    metric, so tr(remainder) expands purely in positive-eigenvalue modes.
    Rejects fields whose trace is not harmonic on the cylinder.
    """
    hf = _as_field(h)
    t = fields_mod.trace(hf)
    scale = max(1.0, t.max_abs_coeff())
    lap = fields_mod.rough_laplacian(t)
    if lap.max_abs_coeff() > tol * scale:
        raise InvalidInput(
            f"trace is not harmonic: Laplacian residual {lap.max_abs_coeff():.3e}"
        )
    cs = hf.cs
    zero_key = ((0,) * cs.dim, "cos")
    terms = []
    for (p, lam), C in t.data.get(zero_key, {}).items():
        if lam == 0.0 and p <= 1:
            terms.append((float(C), p, lam))
        elif abs(float(C)) > tol * scale:
            raise InvalidInput("frequency-zero trace part is not affine")
    affine = RadialProfile(tuple(terms))
    remainder = hf - fields_mod.metric_field(cs).multiply_profile(
        affine.scale(1.0 / (cs.dim + 1))
    )
    return affine, remainder.prune(0.0)


def _absorption_profiles(mu: float, c_plus: float, c_minus: float):
    """Closed-form (k, l) whose Lie derivative has trace
    (c+ e^{s r} + c- e^{-s r}) phi and vanishing divergence."""
    s = math.sqrt(mu)
    k_terms, l_terms = [], []
    for c, sign in ((c_plus, +1.0), (c_minus, -1.0)):
        if c == 0.0:
            continue
        rate = sign * s
        # k = -(c/2mu)(1 + sign (s/2) r) e^{sign s r}
        k_terms.append((-c / (2.0 * mu), 0, rate))
        k_terms.append((-c * sign / (4.0 * s), 1, rate))
        # l = -(c/4)(r - sign / s) e^{sign s r}
        l_terms.append((c * sign / (4.0 * s), 0, rate))
        l_terms.append((-c / 4.0, 1, rate))
    return RadialProfile(tuple(k_terms)), RadialProfile(tuple(l_terms))


def trace_absorption_field(cs: TorusCrossSection, coefficients: dict) -> GaugeField:
    """Gauge field X whose Lie derivative absorbs an oscillating trace.

    ``coefficients`` maps (freq, phase) of a positive-eigenvalue scalar
    mode phi to (c+, c-); the result satisfies, in closed form,
    tr(L_X g0) = sum (c+ e^{s r} + c- e^{-s r}) phi  and  delta(L_X g0) = 0.
    Frequency-zero keys are rejected: an affine trace is not absorbable
    and must be split off first.
    """
    pairs: dict = {}
    sectors: dict = {}
    growth: dict = {}
    for (freq, phase), (c_plus, c_minus) in coefficients.items():
        mu = cs.eigenvalue(freq)
        if mu <= 0.0:
            raise InvalidInput(
                "trace absorption needs mu > 0; split the affine trace off first"
            )
        if c_plus == 0.0 and c_minus == 0.0:
            continue
        k, l = _absorption_profiles(mu, float(c_plus), float(c_minus))
        pairs[(tuple(freq), phase)] = (k, l)
        sectors[("pair", tuple(freq), phase)] = "infinite"
        growth[("pair", tuple(freq), phase)] = _growth_class(k, l)
    return GaugeField(cs, pairs, {}, {}, RadialProfile.zero(), sectors, growth)


# ---------------------------------------------------------------------------
# kernel basis of the reduced per-mode systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelBasisElement:
    """One basis solution of the reduced system.

    ``generator`` is the gauge 1-form X with field = L_X g0 for gauge
    elements, None otherwise.  ``radially_parallel`` marks r-independent
    tensors; ``survives_tau`` is False exactly for the two families that
    the tau perturbation eliminates.
    """

    label: str
    field: TensorField
    radially_parallel: bool
    survives_tau: bool
    meta: tuple = ()
    generator: TensorField | None = None


def _tt_modes(cs: TorusCrossSection, freq=None, phase=None):
    modes = build_spectrum(cs, "TTTensor").modes
    if freq is None:
        return [m for m in modes if not any(m.freq)]
    return [m for m in modes if m.freq == tuple(freq) and m.phase == phase]


def _homogeneous_pair_profiles(mu: float):
    """The four (k, l) solutions of the homogeneous mixed-pair system,
    read off the columns of the fundamental matrix V e^{J r}."""
    s = math.sqrt(mu)
    V = v_matrix(mu)
    out = []
    for base, rate in ((0, s), (2, -s)):
        k0, l0 = V[0, base], V[2, base]
        k1, l1 = V[0, base + 1], V[2, base + 1]
        out.append((RadialProfile(((k0, 0, rate),)), RadialProfile(((l0, 0, rate),))))
        out.append(
            (
                RadialProfile(((k1, 0, rate), (k0, 1, rate))),
                RadialProfile(((l1, 0, rate), (l0, 1, rate))),
            )
        )
    return out


def _gauge_element(cs, label, one_form, parallel, survives, meta):
    return KernelBasisElement(
        label=label,
        field=lie_derivative_metric(one_form),
        radially_parallel=parallel,
        survives_tau=survives,
        meta=meta,
        generator=one_form,
    )


def _metric_tangential(cs: TorusCrossSection) -> TensorField:
    g = np.eye(cs.dim + 1)
    g[0, 0] = 0.0
    return fields_mod.constant_tensor_field(cs, g)


def solve_reduced_system(cs: TorusCrossSection, tau: float = 0.0):
    """Enumerate the kernel basis of the reduced systems at the given tau.

    Elements with survives_tau=False appear only when tau == 0; they are
    the radially parallel gauge tensors eliminated by the perturbation.
    """
    if tau < 0.0:
        raise InvalidInput("tau must be nonnegative")
    for freq in cs.canonical_freqs():
        mu = cs.eigenvalue(freq)
        if mu < 0.0:
            raise InvalidParams("negative cross-section eigenvalue; oscillatory branch")
        if tau > 0.0 and mu > 0.0 and abs(4.0 * tau * tau - mu) <= RESONANCE_TOL:
            raise ResonantTau(
                f"4 tau^2 = {4.0 * tau * tau:.6g} collides with eigenvalue {mu:.6g}"
            )

    basis = []
    one = RadialProfile.constant(1.0)
    ramp = RadialProfile.monomial(1.0, 1, 0.0)

    g_tan = _metric_tangential(cs)
    basis.append(KernelBasisElement("trace", g_tan, True, True))
    basis.append(
        KernelBasisElement("trace_linear", g_tan.multiply_profile(ramp), False, True)
    )

    for i, tt in enumerate(_tt_modes(cs)):
        basis.append(
            KernelBasisElement(
                "tt_parallel", fields_mod.from_mode_profile(cs, tt, one), True, True, (i,)
            )
        )
        basis.append(
            KernelBasisElement(
                "tt_parallel_linear",
                fields_mod.from_mode_profile(cs, tt, ramp),
                False,
                True,
                (i,),
            )
        )

    if tau == 0.0:
        for a in range(cs.dim):
            eta = _harmonic_mode(cs, a)
            basis.append(
                _gauge_element(
                    cs, "shear_gauge",
                    fields_mod.from_mode_profile(cs, eta, ramp),
                    True, False, (a,),
                )
            )
        basis.append(
            _gauge_element(
                cs, "radial_gauge",
                fields_mod.radial_one_form(cs, _scalar_mode(cs, (0,) * cs.dim, "cos"),
                                           ramp.scale(0.5 * math.sqrt(cs.volume))),
                True, False, (),
            )
        )

    for freq in cs.canonical_freqs():
        mu = cs.eigenvalue(freq)
        if mu <= 0.0:
            continue
        s = math.sqrt(mu)
        branches = ((RadialProfile.monomial(1.0, 0, s), "plus"),
                    (RadialProfile.monomial(1.0, 0, -s), "minus"))
        for phase in ("cos", "sin"):
            for j, (k, l) in enumerate(_homogeneous_pair_profiles(mu)):
                X = fields_mod.pair_one_form(cs, _scalar_mode(cs, freq, phase), k, l)
                basis.append(
                    _gauge_element(cs, "scalar_gauge", X, False, True, (freq, phase, j))
                )
            for idx in range(cs.dim - 1):
                eta = _coclosed_mode(cs, freq, phase, idx)
                for prof, branch in branches:
                    X = fields_mod.from_mode_profile(cs, eta, prof)
                    basis.append(
                        _gauge_element(
                            cs, "coclosed_gauge", X, False, True, (freq, phase, idx, branch)
                        )
                    )
            for i, tt in enumerate(_tt_modes(cs, freq, phase)):
                for prof, branch in branches:
                    basis.append(
                        KernelBasisElement(
                            "tt_exp",
                            fields_mod.from_mode_profile(cs, tt, prof),
                            False,
                            True,
                            (freq, phase, i, branch),
                        )
                    )
    return basis


def parallel_space_dimension(cs: TorusCrossSection, tau: float) -> int:
    """Dimension of the radially parallel kernel slice at the given tau."""
    return sum(1 for e in solve_reduced_system(cs, tau) if e.radially_parallel)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class YField:
    """Radially parallel gauge content: radial is the coefficient of
    dr (x) dr, shear maps the coordinate axis a to the coefficient of
    eta_a (x) dr + dr (x) eta_a.  killing is the coefficient of the pure
    translation dr, which no Lie derivative can see; it is carried for
    interface fidelity and always stored as 0."""

    radial: float = 0.0
    killing: float = 0.0
    shear: dict = dc_field(default_factory=dict)

    def is_zero(self) -> bool:
        return self.radial == 0.0 and not self.shear


@dataclass(frozen=True)
class KernelDecomposition:
    """Unique coefficient set of a kernel element.

    pure_trace holds (a, a~) of (a + a~ r) g_N; parallel_tt / linear_tt
    map the parallel TT basis index to the constant / r-linear
    coefficient; exp_modes maps (freq, phase, tt_index) to (a+, a-);
    osc_modes is always empty over flat tori.  gauge_X collects the
    infinite-sector gauge content as a GaugeField (its Lie derivative is
    the gauge part of the tensor); gauge_Y the radially parallel gauge
    coefficients.  condition_numbers reports the per-frequency fit
    conditioning.
    """

    cs: TorusCrossSection
    pure_trace: tuple
    parallel_tt: dict
    linear_tt: dict
    exp_modes: dict
    osc_modes: dict
    gauge_X: GaugeField
    gauge_Y: YField
    condition_numbers: dict

    def reconstruct(self) -> TensorField:
        cs = self.cs
        a, a_tilde = self.pure_trace
        out = _metric_tangential(cs).multiply_profile(
            RadialProfile(((a, 0, 0.0), (a_tilde, 1, 0.0)))
        )
        parallel = _tt_modes(cs)
        for i, coeff in self.parallel_tt.items():
            out = out + fields_mod.from_mode_profile(
                cs, parallel[i], RadialProfile.constant(coeff)
            )
        for i, coeff in self.linear_tt.items():
            out = out + fields_mod.from_mode_profile(
                cs, parallel[i], RadialProfile.monomial(coeff, 1, 0.0)
            )
        for (freq, phase, i), (a_plus, a_minus) in self.exp_modes.items():
            tt = _tt_modes(cs, freq, phase)[i]
            s = math.sqrt(tt.eigenvalue)
            prof = RadialProfile(((a_plus, 0, s), (a_minus, 0, -s)))
            out = out + fields_mod.from_mode_profile(cs, tt, prof)
        if not self.gauge_X.is_zero():
            out = out + lie_derivative_metric(self.gauge_X)
        if self.gauge_Y.radial != 0.0:
            rr = np.zeros((cs.dim + 1, cs.dim + 1))
            rr[0, 0] = 1.0
            out = out + fields_mod.constant_tensor_field(cs, rr).scale(self.gauge_Y.radial)
        for axis, q in self.gauge_Y.shear.items():
            out = out + fields_mod.mixed_pair_tensor(
                cs, _harmonic_mode(cs, axis), RadialProfile.constant(q)
            )
        return out


def _chebyshev_nodes(lo: float, hi: float, n: int) -> np.ndarray:
    j = np.arange(n)
    x = np.cos((2 * j + 1) * math.pi / (2 * n))
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * x


def _eval_key_block(field: TensorField, keys, nodes: np.ndarray) -> np.ndarray:
    """Stack the coefficient functions of the given data keys over the
    nodes into one flat vector."""
    cs = field.cs
    shape = (cs.dim + 1, cs.dim + 1)
    blocks = []
    for key in keys:
        vals = np.zeros((len(nodes),) + shape)
        for (p, lam), C in field.data.get(key, {}).items():
            vals += (nodes**p * np.exp(lam * nodes))[:, None, None] * C
        blocks.append(vals.ravel())
    return np.concatenate(blocks)


def _classify_zero_frequency(h: TensorField, out: dict, tol: float, scale: float):
    cs = h.cs
    d = cs.dim
    amp0 = 1.0 / math.sqrt(cs.volume)
    zero_key = ((0,) * d, "cos")
    profs = h.data.get(zero_key, {})
    parallel = _tt_modes(cs)
    for (p, lam), C in profs.items():
        C = np.asarray(C)
        if lam != 0.0 or p > 1:
            if np.max(np.abs(C)) > tol * scale:
                raise NotInKernel(
                    f"frequency-zero block carries a non-affine profile (power {p}, "
                    f"rate {lam:.3g})"
                )
            continue
        tang = C[1:, 1:]
        trace_part = float(np.trace(tang)) / d
        rest = tang - trace_part * np.eye(d)
        coeffs = {}
        for i, tt in enumerate(parallel):
            pol = np.asarray(tt.polarization)
            w = float(np.tensordot(rest, pol)) / float(np.tensordot(pol, pol))
            if w != 0.0:
                coeffs[i] = w
            rest = rest - w * pol
        if np.max(np.abs(rest)) > tol * scale:
            raise NotInKernel("tangential parallel block outside trace + TT span")
        if p == 0:
            out["trace_a"] = trace_part
            out["parallel_tt"] = coeffs
            out["y_radial"] = float(C[0, 0])
            shear = {}
            for a in range(d):
                q = 0.5 * (float(C[0, 1 + a]) + float(C[1 + a, 0])) / amp0
                if q != 0.0:
                    shear[a] = q
            out["y_shear"] = shear
        else:
            out["trace_a_tilde"] = trace_part
            out["linear_tt"] = coeffs
            row = np.concatenate(([C[0, 0]], C[0, 1:], C[1:, 0]))
            if np.max(np.abs(row)) > tol * scale:
                raise NotInKernel("r-linear radial block cannot sit in the kernel")


def classify_kernel(h, tau: float = 0.0, tol: float = KERNEL_TOL) -> KernelDecomposition:
    """Resolve a kernel element into its unique coefficient set.

    Preconditions (checked, NotInKernel on failure): the linearized Ricci
    operator annihilates h, and the tau-modified divergence of h
    vanishes.  The fit per positive frequency solves a least-squares
    system against the basis solutions sampled at Chebyshev nodes;
    condition numbers are recorded per frequency.
    """
    hf = _as_field(h)
    cs = hf.cs
    scale = max(1.0, hf.max_abs_coeff())
    ric = linearized_ricci(hf).max_abs_coeff()
    if ric > tol * scale:
        raise NotInKernel(f"linearized Ricci residual {ric:.3e} exceeds {tol:.1e}")
    div = modified_divergence(hf, tau).max_abs_coeff()
    if div > tol * scale:
        raise NotInKernel(f"tau-modified divergence residual {div:.3e} exceeds {tol:.1e}")

    zero_out = {
        "trace_a": 0.0, "trace_a_tilde": 0.0, "parallel_tt": {}, "linear_tt": {},
        "y_radial": 0.0, "y_shear": {},
    }
    _classify_zero_frequency(hf, zero_out, tol, scale)

    pairs: dict = {}
    coclosed: dict = {}
    sectors: dict = {}
    growth: dict = {}
    exp_modes: dict = {}
    cond: dict = {}

    freqs = sorted({freq for (freq, _phase) in hf.data if any(freq)})
    for freq in freqs:
        mu = cs.eigenvalue(freq)
        s = math.sqrt(mu)
        keys = [(freq, "cos"), (freq, "sin")]
        nodes = _chebyshev_nodes(0.0, 4.0 / s, FIT_NODES)

        columns = []
        labels = []
        for phase in ("cos", "sin"):
            for j, (k, l) in enumerate(_homogeneous_pair_profiles(mu)):
                X = fields_mod.pair_one_form(cs, _scalar_mode(cs, freq, phase), k, l)
                columns.append(lie_derivative_metric(X))
                labels.append(("pair", phase, j, (k, l)))
            for idx in range(cs.dim - 1):
                eta = _coclosed_mode(cs, freq, phase, idx)
                for sign in (+1.0, -1.0):
                    prof = RadialProfile.monomial(1.0, 0, sign * s)
                    X = fields_mod.from_mode_profile(cs, eta, prof)
                    columns.append(lie_derivative_metric(X))
                    labels.append(("coclosed", phase, idx, sign))
            for i, tt in enumerate(_tt_modes(cs, freq, phase)):
                for sign in (+1.0, -1.0):
                    prof = RadialProfile.monomial(1.0, 0, sign * s)
                    columns.append(fields_mod.from_mode_profile(cs, tt, prof))
                    labels.append(("tt", phase, i, sign))

        A = np.stack([_eval_key_block(col, keys, nodes) for col in columns], axis=1)
        b = _eval_key_block(hf, keys, nodes)
        coeffs, _res, _rank, _sv = np.linalg.lstsq(A, b, rcond=None)
        cond[freq] = float(np.linalg.cond(A))
        fit_err = float(np.max(np.abs(A @ coeffs - b)))
        if fit_err > max(tol, 1e-9) * max(scale, float(np.max(np.abs(b))), 1.0):
            raise NotInKernel(
                f"frequency {freq} block outside the kernel span (fit residual "
                f"{fit_err:.3e})"
            )

        pair_acc: dict = {}
        for c, label in zip(coeffs, labels):
            if abs(c) < 1e-13 * max(1.0, scale):
                continue
            kind = label[0]
            if kind == "pair":
                _, phase, _j, (k, l) = label
                k_acc, l_acc = pair_acc.get(phase, (RadialProfile.zero(), RadialProfile.zero()))
                pair_acc[phase] = (k_acc + k.scale(float(c)), l_acc + l.scale(float(c)))
            elif kind == "coclosed":
                _, phase, idx, sign = label
                key = (freq, phase, idx)
                prof = coclosed.get(key, RadialProfile.zero())
                coclosed[key] = prof + RadialProfile.monomial(
                    float(c), 0, sign * s
                )
            else:
                _, phase, i, sign = label
                key = (freq, phase, i)
                a_plus, a_minus = exp_modes.get(key, (0.0, 0.0))
                if sign > 0:
                    a_plus += float(c)
                else:
                    a_minus += float(c)
                exp_modes[key] = (a_plus, a_minus)
        for phase, (k, l) in pair_acc.items():
            if not (k.is_zero() and l.is_zero()):
                pairs[(freq, phase)] = (k, l)
                sectors[("pair", freq, phase)] = "infinite"
                growth[("pair", freq, phase)] = _growth_class(k, l)

    for key, prof in coclosed.items():
        sectors[("coclosed",) + key] = "infinite"
        growth[("coclosed",) + key] = _growth_class(prof)

    gauge_X = GaugeField(cs, pairs, coclosed, {}, RadialProfile.zero(), sectors, growth)
    gauge_Y = YField(
        radial=zero_out["y_radial"], killing=0.0, shear=zero_out["y_shear"]
    )
    if tau > 0.0 and not gauge_Y.is_zero():
        raise NotInKernel(
            "radially parallel gauge content survived a tau > 0 classification"
        )
    return KernelDecomposition(
        cs=cs,
        pure_trace=(zero_out["trace_a"], zero_out["trace_a_tilde"]),
        parallel_tt=zero_out["parallel_tt"],
        linear_tt=zero_out["linear_tt"],
        exp_modes=exp_modes,
        osc_modes={},
        gauge_X=gauge_X,
        gauge_Y=gauge_Y,
        condition_numbers=cond,
    )
