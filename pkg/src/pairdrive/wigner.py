"""Steady-state Wigner function and photon concentration on max-pairing modes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np

from .model import ModelSpec, PairingSpectrum, build_pairing_matrix
from .moments import DEFAULT_TOL, _check_delta, _collective, _lam_key, mode_moments
from .specialfn import LogComplex, hyper_pfq

__all__ = [
    "PhasePoint",
    "wigner_at",
    "wigner_grid",
    "wigner_norm_check",
    "max_pairing_concentration",
    "max_mode_density_correlation",
]


@dataclass(frozen=True)
class PhasePoint:
    alpha: tuple

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(complex(a) for a in self.alpha))

    def rotated(self, spectrum: PairingSpectrum) -> np.ndarray:
        """Amplitudes in the singular-mode basis."""
        return spectrum.V.T @ np.asarray(self.alpha)


def _log_norm(spectrum, delta, tol) -> float:
    return _collective(_lam_key(spectrum), delta, tol).log_norm


def _argument(spec: ModelSpec, alpha: np.ndarray) -> complex:
    u = spec.U / spec.N
    M = build_pairing_matrix(spec) / u
    ac = np.conj(alpha)
    return complex(-(ac @ M @ ac))


def _log_hyp0f1(delta: complex, w: complex, tol: float) -> LogComplex:
    res = hyper_pfq([], [delta], w, tol=tol)
    if not res.flagged:
        return res.value
    # heavy cancellation: redo at raised working precision
    digits = 20 + int(math.log10(res.inflation))
    with mpmath.workdps(digits):
        v = mpmath.hyp0f1(mpmath.mpc(delta.real, delta.imag), mpmath.mpc(w.real, w.imag))
        if v == 0:
            return LogComplex.zero()
        return LogComplex(float(mpmath.log(abs(v))), float(mpmath.arg(v)))


def wigner_at(
    spec: ModelSpec,
    spectrum: PairingSpectrum,
    delta: complex,
    point,
    tol: float = DEFAULT_TOL,
) -> float:
    """Wigner function of the steady state at one phase-space point."""
    delta = _check_delta(delta)
    alpha = np.asarray(point.alpha if isinstance(point, PhasePoint) else point, dtype=complex)
    if alpha.shape != (spec.N,):
        raise ValueError("phase point needs N amplitudes")
    w = _argument(spec, alpha)
    f = _log_hyp0f1(delta, w, tol)
    if f.is_zero:
        return 0.0
    logW = (
        spec.N * math.log(2 / math.pi)
        + 2 * f.log_mag
        - 2 * float(np.vdot(alpha, alpha).real)
        - _log_norm(spectrum, delta, tol)
    )
    return math.exp(logW)


def _hyp0f1_vec(delta: complex, w: np.ndarray, terms: int) -> np.ndarray:
    """Direct 0F1 summation over an array of moderate arguments."""
    out = np.ones_like(w, dtype=complex)
    t = np.ones_like(w, dtype=complex)
    for l in range(terms):
        t = t * w / ((delta + l) * (l + 1))
        out += t
    return out


def wigner_grid(spec, spectrum, delta, alphas: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Vectorised W over an array of points with shape (..., N)."""
    delta = _check_delta(delta)
    alphas = np.asarray(alphas, dtype=complex)
    u = spec.U / spec.N
    M = build_pairing_matrix(spec) / u
    ac = alphas.conj()
    w = -np.einsum("...i,ij,...j->...", ac, M, ac)
    wmax = float(np.abs(w).max(initial=0.0))
    if wmax > 200:
        flat = alphas.reshape(-1, spec.N)
        vals = [wigner_at(spec, spectrum, delta, a, tol) for a in flat]
        return np.array(vals).reshape(alphas.shape[:-1])
    terms = int(4 * math.sqrt(wmax) + 40)
    f = _hyp0f1_vec(delta, w, terms)
    r2 = np.sum(np.abs(alphas) ** 2, axis=-1)
    logn = _log_norm(spectrum, delta, tol)
    return (2 / math.pi) ** spec.N * np.abs(f) ** 2 * np.exp(-2 * r2 - logn)


def wigner_norm_check(spec, spectrum, delta, grid_radius: float, grid_points: int) -> float:
    """Trapezoidal integral of W over a tensor grid (N <= 2)."""
    if spec.N > 2:
        raise ValueError("quadrature check is limited to N <= 2")
    x = np.linspace(-grid_radius, grid_radius, grid_points)
    h = x[1] - x[0]
    wts = np.full(grid_points, h)
    wts[0] = wts[-1] = h / 2
    if spec.N == 1:
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = wigner_grid(spec, spectrum, delta, (X + 1j * Y)[..., None])
        return float(wts @ W @ wts)
    total = 0.0
    X, Y = np.meshgrid(x, x, indexing="ij")
    a2 = (X + 1j * Y).ravel()
    w2 = np.outer(wts, wts).ravel()
    for i, xi in enumerate(x):
        for j, yj in enumerate(x):
            a1 = np.full_like(a2, xi + 1j * yj)
            W = wigner_grid(spec, spectrum, delta, np.stack([a1, a2], axis=-1))
            total += wts[i] * wts[j] * float(W @ w2)
    return total


def max_pairing_concentration(spec, spectrum: PairingSpectrum, delta, tol: float = DEFAULT_TOL) -> float:
    """Fraction of photons in the modes with the largest singular value."""
    mm = mode_moments(spectrum, delta, spec.N, tol)
    total = float(np.sum(mm.occ))
    if total <= 0:
        raise ValueError("steady state is empty")
    top = list(spectrum.classes[0])
    return float(np.sum(mm.occ[top]) / total)


def max_mode_density_correlation(spec, spectrum: PairingSpectrum, delta, tol: float = DEFAULT_TOL) -> float:
    """Normalised density cross-correlation between two max-pairing modes."""
    if spectrum.s < 2:
        raise ValueError("needs at least two max-pairing modes")
    mm = mode_moments(spectrum, delta, spec.N, tol)
    a, b = spectrum.classes[0][:2]
    na, nb = mm.occ[a], mm.occ[b]
    return float((mm.Q[a, b].real - na * nb) / (na * nb))
