"""Spectral data of flat-torus cross sections.

Everything downstream consumes the cross section through its spectrum: real
Fourier eigenfunctions, coclosed eigen-1-forms, harmonic 1-forms, and
transverse-traceless eigentensors, all L2-normalized over the fundamental
domain.  On a flat torus the whole spectrum is explicit, so modes are
enumerated rather than computed: frequency vectors k with |k_j| <= cutoff,
angular frequencies omega_j = 2 pi k_j / l_j, eigenvalue mu = |omega|^2.

Frequency vectors are restricted to a canonical half-space (first nonzero
entry positive) so the cos/sin pairs at +-k are not double counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidParams

__all__ = [
    "TorusCrossSection",
    "Mode",
    "ModeImage",
    "Spectrum",
    "KINDS",
    "build_spectrum",
    "evaluate_mode",
    "pointwise_operators",
    "mode_inner_product",
    "tangent_complement",
]

KINDS = ("Scalar", "CoclosedOneForm", "HarmonicOneForm", "TTTensor", "PureTrace")
_KIND_ORDER = {kind: i for i, kind in enumerate(KINDS)}

_RANK_ALIASES = {
    "scalar": "Scalar",
    "coclosed": "CoclosedOneForm",
    "harmonic": "HarmonicOneForm",
    "tt": "TTTensor",
    "trace": "PureTrace",
}


@dataclass(frozen=True)
class TorusCrossSection:
    """Flat torus with side lengths ``side_lengths``, dimension ``dim``.

    ``freq_cutoff`` bounds the largest |k_j| of generated frequency vectors.
    Immutable; all derived data is recomputed on demand.
    """

    dim: int
    side_lengths: tuple
    freq_cutoff: int

    def __post_init__(self):
        if self.dim < 1 or self.dim != int(self.dim):
            raise InvalidParams(f"dim must be a positive integer, got {self.dim}")
        lengths = tuple(float(l) for l in self.side_lengths)
        if len(lengths) != self.dim:
            raise InvalidParams(
                f"need {self.dim} side lengths, got {len(lengths)}"
            )
        if any(l <= 0 for l in lengths):
            raise InvalidParams("side lengths must be strictly positive")
        if self.freq_cutoff < 1 or self.freq_cutoff != int(self.freq_cutoff):
            raise InvalidParams("freq_cutoff must be a positive integer")
        object.__setattr__(self, "side_lengths", lengths)
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "freq_cutoff", int(self.freq_cutoff))

    @property
    def volume(self) -> float:
        return float(np.prod(self.side_lengths))

    def omega(self, freq) -> np.ndarray:
        return 2.0 * math.pi * np.asarray(freq, dtype=float) / np.asarray(self.side_lengths)

    def eigenvalue(self, freq) -> float:
        w = self.omega(freq)
        return float(w @ w)

    def canonical_freqs(self):
        """All frequency vectors in the canonical half-space, |k_j| <= cutoff."""
        c = self.freq_cutoff
        grids = np.meshgrid(*[np.arange(-c, c + 1)] * self.dim, indexing="ij")
        ks = np.stack([g.ravel() for g in grids], axis=-1)
        out = []
        for k in ks:
            nz = k[k != 0]
            if nz.size == 0 or nz[0] > 0:
                out.append(tuple(int(v) for v in k))
        out.sort()
        return out

    def smallest_positive_eigenvalue(self) -> float:
        """Brute-force min of |omega|^2 over nonzero canonical frequencies."""
        best = math.inf
        for k in self.canonical_freqs():
            if any(k):
                best = min(best, self.eigenvalue(k))
        if not math.isfinite(best):
            raise InvalidParams("cutoff produced no nonzero frequency")
        return best


@dataclass(frozen=True)
class Mode:
    """One normalized eigen-object on the cross section.

    ``polarization`` is the full constant coefficient tensor including the
    L2 normalization, so the pointwise value is polarization * trig(omega.x)
    with a bare cos or sin.  Shape () for scalars, (d,) for 1-forms, (d, d)
    symmetric for 2-tensors.
    """

    kind: str
    freq: tuple
    eigenvalue: float
    polarization: np.ndarray
    phase: str
    omega: tuple

    def __post_init__(self):
        object.__setattr__(self, "polarization", np.asarray(self.polarization, dtype=float))
        self.polarization.setflags(write=False)

    @property
    def rank(self) -> int:
        return self.polarization.ndim

    def sort_key(self):
        return (
            self.eigenvalue,
            _KIND_ORDER[self.kind],
            self.freq,
            0 if self.phase == "cos" else 1,
            tuple(np.round(self.polarization, 12).ravel()),
        )


class ModeImage(NamedTuple):
    """Unnormalized image of a mode under a pointwise operator.

    Value at x is ``coefficient * trig(omega . x)``; ``coefficient`` may be
    any tensor rank, and a zero coefficient encodes the zero field.
    """

    coefficient: np.ndarray
    freq: tuple
    phase: str


@dataclass(frozen=True)
class Spectrum:
    """All modes of one rank selector, sorted by eigenvalue."""

    cross_section: TorusCrossSection
    modes: tuple
    mu1: float


def tangent_complement(omega: np.ndarray) -> list:
    """Deterministic orthonormal basis of the hyperplane perpendicular to omega.

    Seeds modified Gram-Schmidt with the standard basis vectors ordered by
    increasing |omega_i| (ties broken by index), dropping the one most
    parallel to omega.  Returns d-1 unit vectors; stable under small
    perturbations of omega only up to the discrete seed choice, which is fine
    because omega comes from integer frequencies.
    """
    omega = np.asarray(omega, dtype=float)
    d = omega.size
    unit = omega / np.linalg.norm(omega)
    order = sorted(range(d), key=lambda i: (abs(unit[i]), i))
    seeds = [np.eye(d)[i] for i in order[: d - 1]]
    basis = []
    for v in seeds:
        w = v - (v @ unit) * unit
        for b in basis:
            w = w - (w @ b) * b
        nrm = np.linalg.norm(w)
        if nrm < 1e-12:
            continue  # can only happen with degenerate seeds; skip and move on
        basis.append(w / nrm)
    if len(basis) != d - 1:
        raise InvalidParams("failed to build tangent complement")
    return basis


def _traceless_sym_basis(vectors: list) -> list:
    """Frobenius-orthonormal basis of traceless symmetric matrices built on
    the given orthonormal vectors: symmetrized off-diagonal pairs plus the
    standard diagonal ladder (sum of first m minus m times the next)."""
    n = len(vectors)
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            vi, vj = vectors[i], vectors[j]
            out.append((np.outer(vi, vj) + np.outer(vj, vi)) / math.sqrt(2.0))
    for m in range(1, n):
        acc = sum(np.outer(vectors[i], vectors[i]) for i in range(m))
        acc = acc - m * np.outer(vectors[m], vectors[m])
        out.append(acc / math.sqrt(m * (m + 1)))
    return out


def _phases(freq) -> tuple:
    return ("cos",) if not any(freq) else ("cos", "sin")


def build_spectrum(cs: TorusCrossSection, rank: str) -> Spectrum:
    """Enumerate every mode of the requested kind up to the frequency cutoff.

    ``rank`` accepts a kind name from KINDS or one of the short aliases
    scalar / coclosed / harmonic / tt / trace.
    """
    kind = _RANK_ALIASES.get(rank, rank)
    if kind not in KINDS:
        raise InvalidParams(f"unknown rank selector {rank!r}")

    vol = cs.volume
    amp0 = 1.0 / math.sqrt(vol)
    amp1 = math.sqrt(2.0 / vol)
    modes = []

    for freq in cs.canonical_freqs():
        mu = cs.eigenvalue(freq)
        omega = tuple(float(w) for w in cs.omega(freq))
        nonzero = any(freq)
        amp = amp1 if nonzero else amp0

        if kind == "Scalar":
            for phase in _phases(freq):
                modes.append(
                    Mode("Scalar", freq, mu, np.array(amp), phase, omega)
                )

        elif kind == "CoclosedOneForm":
            if not nonzero:
                continue
            for pol in tangent_complement(np.array(omega)):
                for phase in _phases(freq):
                    modes.append(
                        Mode("CoclosedOneForm", freq, mu, amp * pol, phase, omega)
                    )

        elif kind == "HarmonicOneForm":
            if nonzero:
                continue
            for i in range(cs.dim):
                modes.append(
                    Mode("HarmonicOneForm", freq, 0.0, amp0 * np.eye(cs.dim)[i], "cos", omega)
                )

        elif kind == "TTTensor":
            if nonzero:
                tangent = tangent_complement(np.array(omega))
            else:
                tangent = [np.eye(cs.dim)[i] for i in range(cs.dim)]
            for pol in _traceless_sym_basis(tangent):
                for phase in _phases(freq):
                    modes.append(Mode("TTTensor", freq, mu, amp * pol, phase, omega))

        elif kind == "PureTrace":
            pol = np.eye(cs.dim) / math.sqrt(cs.dim)
            for phase in _phases(freq):
                modes.append(Mode("PureTrace", freq, mu, amp * pol, phase, omega))

    modes.sort(key=Mode.sort_key)
    return Spectrum(cs, tuple(modes), cs.smallest_positive_eigenvalue())


def evaluate_mode(m: Mode, x) -> np.ndarray:
    """Pointwise value of the mode at x (reduced modulo the periods).

    x may be a single point of length d or an array whose last axis has
    length d; the tensor axes of the result come first.
    """
    x = np.asarray(x, dtype=float)
    phase = np.tensordot(np.asarray(m.omega), np.moveaxis(np.atleast_2d(x), -1, 0), axes=1)
    trig = np.cos(phase) if m.phase == "cos" else np.sin(phase)
    val = np.multiply.outer(m.polarization, trig)
    if x.ndim == 1:
        val = val[..., 0]
    return val


def pointwise_operators(m: Mode) -> dict:
    """Eigenvalue, divergence image, and trace image of a mode, symbolically.

    The divergence convention is delta = -sum_a partial_a (.)_{a ...}; images
    come back as ModeImage carriers (coefficient times bare trig).  Ranks
    without the corresponding operation report None.
    """
    omega = np.asarray(m.omega)
    d = omega.size

    # derivative flips the trig branch: d/dx cos = -omega sin, d/dx sin = +omega cos
    if m.phase == "cos":
        div_phase, div_sign = "sin", +1.0
    else:
        div_phase, div_sign = "cos", -1.0

    divergence = None
    trace = None
    if m.rank == 1:
        coeff = div_sign * float(m.polarization @ omega)
        divergence = ModeImage(np.array(coeff), m.freq, div_phase)
    elif m.rank == 2:
        coeff = div_sign * (m.polarization @ omega)
        divergence = ModeImage(coeff, m.freq, div_phase)
        trace = ModeImage(np.array(float(np.trace(m.polarization))), m.freq, m.phase)

    return {
        "laplacian_eigenvalue": m.eigenvalue,
        "divergence_image": divergence,
        "trace_image": trace,
    }


def mode_inner_product(a: Mode, b: Mode, volume: float) -> float:
    """Exact L2 inner product over N of two modes of equal rank.

    Uses orthogonality of the real Fourier basis: distinct (freq, phase)
    pairs integrate to zero, cos^2 and sin^2 integrate to vol/2 (vol at
    freq 0, where only the cos branch exists).
    """
    if a.rank != b.rank:
        raise InvalidParams("inner product needs equal ranks")
    if a.freq != b.freq or a.phase != b.phase:
        return 0.0
    trig = volume if not any(a.freq) else volume / 2.0
    return float(np.sum(a.polarization * b.polarization)) * trig
