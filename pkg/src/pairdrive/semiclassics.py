"""Semiclassical fixed points and their linear stability.

Amplitudes ``beta`` live in the singular-mode basis and are scaled so
that the equation of motion reads

    i u^{-1} d beta_j/dt = 2 lam_j conj(beta_j)
                           + beta_j [(2 |beta|^2 + 1) - Delta_eff / u].

Rates are reported in absolute units so they compare directly with kappa.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import ModelSpec, PairingSpectrum

__all__ = [
    "FixedPoint",
    "eom_rhs",
    "stable_sphere",
    "ring_radii",
    "fixed_point",
    "sphere_point",
    "closed_form_eigenvalues",
    "numerical_jacobian",
    "stability_eigenvalues",
    "spectrum_distance",
    "StabilityMismatch",
]

FP_TOL = 1e-10
JAC_TOL = 1e-8


class StabilityMismatch(AssertionError):
    pass


@dataclass
class FixedPoint:
    beta: np.ndarray
    lambda_class: float
    theta: float
    R_ss: float
    class_index: int = 0
    eigenvalues: Optional[np.ndarray] = field(default=None)
    stable: Optional[bool] = None


def eom_rhs(spec: ModelSpec, spectrum: PairingSpectrum, beta: Sequence[complex]) -> np.ndarray:
    """Time derivative of the singular-mode amplitudes."""
    beta = np.asarray(beta, dtype=complex)
    u = spec.U / spec.N
    de = spec.derived.Delta_eff
    lam = np.asarray(spectrum.lam)
    norm2 = float(np.vdot(beta, beta).real)
    bracket = 2 * lam * beta.conj() + beta * ((2 * norm2 + 1) - de / u)
    return -1j * u * bracket


def ring_radii(spec: ModelSpec, lam: float) -> list:
    """Squared radii of nonzero fixed points for singular value ``lam``.

    Returns (sign, R) pairs for the '+' and '-' roots that are real and positive.
    """
    u = spec.U / spec.N
    disc = (2 * lam) ** 2 - (spec.kappa / (2 * u)) ** 2
    if disc < 0:
        return []
    out = []
    for sgn in (+1, -1):
        R2 = (spec.Delta / u - 1 + sgn * math.sqrt(disc)) / 2
        if R2 > 0:
            out.append((sgn, math.sqrt(R2)))
    return out


def _theta(spec: ModelSpec, lam: float, R: float) -> float:
    u = spec.U / spec.N
    de = spec.derived.Delta_eff
    e = -((2 * R * R + 1) - de / u) / (2 * lam)  # = exp(-2 i theta)
    th = -0.5 * cmath.phase(e)
    if th <= -math.pi / 2:
        th += math.pi
    return th


def stable_sphere(spec: ModelSpec, spectrum: PairingSpectrum):
    """(R_ss, theta, s) of the stable max-pairing sphere, or None."""
    u = spec.U / spec.N
    lam = spectrum.lam_star
    disc = (2 * lam) ** 2 - (spec.kappa / (2 * u)) ** 2
    if disc <= 0:
        return None
    arg = spec.Delta / u - 1 + math.sqrt(disc)
    if arg <= 0:
        return None
    R = math.sqrt(arg / 2)
    return R, _theta(spec, lam, R), spectrum.s


def fixed_point(
    spec: ModelSpec,
    spectrum: PairingSpectrum,
    class_index: int = 0,
    direction: Optional[Sequence[float]] = None,
    root: int = +1,
) -> FixedPoint:
    """Nonzero fixed point with support in one degeneracy class."""
    members = list(spectrum.classes[class_index])
    lam = float(spectrum.lam[members[0]])
    radii = dict(ring_radii(spec, lam))
    if root not in radii:
        raise ValueError("no fixed point with the requested root")
    R = radii[root]
    th = _theta(spec, lam, R)
    if direction is None:
        direction = np.zeros(len(members))
        direction[0] = 1.0
    x = np.asarray(direction, dtype=float)
    x = x / np.linalg.norm(x)
    beta = np.zeros(spectrum.N, complex)
    beta[members] = cmath.exp(1j * th) * R * x
    return FixedPoint(beta=beta, lambda_class=lam, theta=th, R_ss=R, class_index=class_index)


def sphere_point(spec, spectrum, direction=None) -> Optional[FixedPoint]:
    if stable_sphere(spec, spectrum) is None:
        return None
    return fixed_point(spec, spectrum, 0, direction, +1)


def closed_form_eigenvalues(spec: ModelSpec, spectrum: PairingSpectrum, fp: FixedPoint) -> np.ndarray:
    u = spec.U / spec.N
    k2 = spec.kappa / 2
    R = fp.R_ss
    lam = fp.lambda_class
    members = set(spectrum.classes[fp.class_index])
    out = []
    rad = cmath.sqrt(k2 ** 2 - 8 * u * u * R * R * (2 * R * R + 1) + 8 * u * spec.Delta * R * R)
    out += [-k2 + rad, -k2 - rad]
    first = True
    for j in range(spectrum.N):
        if j in members:
            if first:
                first = False  # the radial direction
                continue
            out += [0.0, -spec.kappa]
        else:
            r = cmath.sqrt(k2 ** 2 - 4 * u * u * (lam ** 2 - spectrum.lam[j] ** 2))
            out += [-k2 + r, -k2 - r]
    return np.array(out, dtype=complex)


def numerical_jacobian(spec, spectrum, beta, step: Optional[float] = None) -> np.ndarray:
    """Real 2N x 2N Jacobian of the flow at ``beta``.

    The flow is a cubic polynomial in (Re beta, Im beta), so one Richardson
    step removes the whole truncation error of central differences.
    """
    beta = np.asarray(beta, dtype=complex)
    N = len(beta)
    x0 = np.concatenate([beta.real, beta.imag])
    h = step if step is not None else 1e-3 * max(1.0, float(np.abs(beta).max(initial=0.0)))

    def f(x):
        r = eom_rhs(spec, spectrum, x[:N] + 1j * x[N:])
        return np.concatenate([r.real, r.imag])

    def central(hh):
        J = np.empty((2 * N, 2 * N))
        for c in range(2 * N):
            e = np.zeros(2 * N)
            e[c] = hh
            J[:, c] = (f(x0 + e) - f(x0 - e)) / (2 * hh)
        return J

    return (4 * central(h / 2) - central(h)) / 3


def spectrum_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Largest pairing distance under the optimal matching of two multisets."""
    a = np.asarray(a, complex)
    b = np.asarray(b, complex)
    if len(a) != len(b):
        return math.inf
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max(initial=0.0))


def stability_eigenvalues(
    spec: ModelSpec, spectrum: PairingSpectrum, fp: FixedPoint, verify: bool = True
) -> np.ndarray:
    res = np.abs(eom_rhs(spec, spectrum, fp.beta)).max(initial=0.0)
    scale = abs(spec.U / spec.N) * max(1.0, fp.R_ss ** 2, spectrum.lam_star)
    if res > FP_TOL * scale:
        raise ValueError(f"not a fixed point (residual {res:.3g})")
    ev = closed_form_eigenvalues(spec, spectrum, fp)
    if verify:
        num = np.linalg.eigvals(numerical_jacobian(spec, spectrum, fp.beta))
        dist = spectrum_distance(ev, num)
        if dist > JAC_TOL * max(1.0, spec.kappa, scale):
            raise StabilityMismatch(f"closed form and Jacobian spectra differ by {dist:.3g}")
    fp.eigenvalues = ev
    fp.stable = bool(np.all(ev.real <= 1e-10 * max(1.0, spec.kappa)))
    return ev
