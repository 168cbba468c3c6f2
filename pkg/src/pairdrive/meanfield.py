"""Leading-order dynamical mean field for the on-site driven model.

Each site sees a detuned degenerate parametric amplifier with loss,

    H_site = -delta_e a^dag a + G a^dag^2 + conj(G) a^2,
    delta_e = Delta - 2 U n,

whose Gaussian steady state fixes the density n self-consistently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import Polynomial
from scipy.optimize import fsolve, minimize_scalar

from .model import ModelSpec
from .moments import collective_moment_unitary

__all__ = [
    "ThresholdError",
    "ScanError",
    "MFSolution",
    "CriticalPoint",
    "ScanResult",
    "gaussian_site_density",
    "site_density_polynomials",
    "selfconsistency_cubic",
    "solve_selfconsistent",
    "critical_point",
    "critical_point_closed_form",
    "exact_density_D0",
    "susceptibility",
    "susceptibility_scan",
    "fit_exponent",
    "exact_critical_estimate",
]


class ThresholdError(ValueError):
    """No Gaussian steady state: the amplifier is at or above threshold."""


class ScanError(RuntimeError):
    pass


@dataclass(frozen=True)
class MFSolution:
    nbar_mf: float
    branch: str
    stable: bool
    residual: float


@dataclass(frozen=True)
class CriticalPoint:
    kappa_star: float
    delta_star: float
    method_tolerance: float


def gaussian_site_density(delta_e: float, G: complex, kappa: float) -> float:
    """Steady-state photon number of the lossy parametric amplifier.

    Solves the second-moment equations for (a, a^dag) as a Sylvester
    problem A S + S A^T + D = 0.
    """
    G = complex(G)
    if 4 * abs(G) ** 2 >= delta_e ** 2 + kappa ** 2 / 4:
        raise ThresholdError("parametric threshold reached")
    if G == 0:
        return 0.0
    # d/dt (a, a^dag) = A (a, a^dag)
    A = np.array(
        [[1j * delta_e - kappa / 2, -2j * G], [2j * G.conjugate(), -1j * delta_e - kappa / 2]]
    )
    # vacuum input noise enters <a a^dag>
    Dn = np.array([[0.0, kappa], [0.0, 0.0]], dtype=complex)
    S = sla.solve_sylvester(A, A.T, -Dn)
    return float(S[1, 0].real)


def site_density_polynomials(G: complex, kappa: float, scale: float = 1.0):
    """(num, den) with n(delta_e) = num / den(delta_e), den quadratic in delta_e.

    The coefficients are read off the Sylvester solution: 1/n is exactly a
    quadratic polynomial in delta_e, recovered by interpolation well below
    threshold.
    """
    G = complex(G)
    if G == 0:
        return Polynomial([0.0]), Polynomial([1.0])
    base = 4 * abs(G) + kappa + scale
    xs = base * np.array([1.0, 2.0, 3.0])
    inv = [1.0 / gaussian_site_density(x, G, kappa) for x in xs]
    den = Polynomial.fit(xs, inv, 2).convert()
    # normalise so that num is a constant
    num = Polynomial([1.0])
    # clean tiny odd coefficient left by rounding (den is even in delta_e)
    c = den.coef.copy()
    if len(c) > 1 and abs(c[1]) < 1e-9 * max(abs(c[0]), abs(c[2]) * base ** 2):
        c[1] = 0.0
    return num, Polynomial(c)


def selfconsistency_cubic(spec: ModelSpec) -> Polynomial:
    """p(n) = n * den(Delta - 2 U n) - num, whose roots are the MF densities."""
    num, den = site_density_polynomials(spec.G, spec.kappa, abs(spec.U))
    shift = Polynomial([spec.Delta, -2 * spec.U])
    return Polynomial([0.0, 1.0]) * den(shift) - num


def _residual(spec: ModelSpec, n: float) -> float:
    de = spec.Delta - 2 * spec.U * n
    try:
        return abs(n - gaussian_site_density(de, spec.G, spec.kappa))
    except ThresholdError:
        return math.inf


def solve_selfconsistent(spec: ModelSpec) -> list:
    """All non-negative self-consistent densities, ordered low to high."""
    if spec.D != 0:
        raise ValueError("mean-field self-consistency is set up for D = 0")
    if spec.G == 0:
        return [MFSolution(0.0, "low", True, 0.0)]
    p = selfconsistency_cubic(spec)
    dp = p.deriv()
    roots = []
    for r in p.roots():
        if abs(r.imag) > 1e-7 * max(1.0, abs(r.real)) or r.real < 0:
            continue
        x = r.real
        for _ in range(50):
            d = dp(x)
            if d == 0:
                break
            step = p(x) / d
            x -= step
            if abs(step) < 1e-15 * max(1.0, abs(x)):
                break
        res = _residual(spec, x)
        if res < 1e-10 * max(1.0, x):
            roots.append(x)
    roots = sorted(set(np.round(roots, 14)))
    labels = {1: ["low"], 2: ["low", "high"], 3: ["low", "middle", "high"]}[len(roots)]
    out = []
    for x, lab in zip(roots, labels):
        out.append(MFSolution(float(x), lab, bool(dp(x) > 0), _residual(spec, x)))
    return out


def _discriminant(p: Polynomial) -> float:
    d, c, b, a = (list(p.coef) + [0, 0, 0, 0])[:4]
    return 18 * a * b * c * d - 4 * b ** 3 * d + b * b * c * c - 4 * a * c ** 3 - 27 * a * a * d * d


def _max_disc(G, U, kappa, delta_hi):
    """max over Delta of the cubic discriminant, and its argmax."""

    def f(delta):
        spec = ModelSpec(N=1, U=U, Delta=delta, kappa=kappa, G=G)
        return _discriminant(selfconsistency_cubic(spec))

    grid = np.linspace(0.0, delta_hi, 161)
    vals = np.array([f(x) for x in grid])
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    if -res.fun > vals[i]:
        return -res.fun, res.x
    return vals[i], grid[i]


def critical_point(G: complex, U: float = 1.0, tol: float = 1e-4) -> CriticalPoint:
    """Largest loss rate with a tristable window, by bisection on kappa."""
    gabs = abs(complex(G))
    if gabs == 0:
        raise ValueError("no tristability without drive")
    delta_hi = 8 * (abs(U) + gabs) + 4 * gabs
    # work with the sign of the discriminant normalised by the drive scale
    def tristable(kappa):
        v, _ = _max_disc(G, U, kappa, delta_hi)
        return v > 0

    lo = 1e-6 * gabs
    if not tristable(lo):
        raise ValueError("no tristable region found")
    hi = 4 * gabs + 4 * abs(U)
    while tristable(hi):
        hi *= 2
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if tristable(mid):
            lo = mid
        else:
            hi = mid
    kstar = 0.5 * (lo + hi)
    _, dstar = _max_disc(G, U, kstar, delta_hi)
    # the discriminant is flat near the cusp; polish on the triple-root
    # conditions p = p' = p'' = 0 in (n, Delta, kappa)
    def triple(x):
        n, d, k = x
        p = selfconsistency_cubic(ModelSpec(N=1, U=U, Delta=d, kappa=abs(k), G=G))
        lead = abs(p.coef[-1])
        return [p(n) / lead, p.deriv()(n) / lead, p.deriv(2)(n) / lead]

    p0 = selfconsistency_cubic(ModelSpec(N=1, U=U, Delta=dstar, kappa=kstar, G=G))
    n0 = -p0.coef[2] / (3 * p0.coef[3])
    sol, info, _, _ = fsolve(triple, [n0, dstar, kstar], full_output=True, xtol=1e-13)
    if np.abs(info["fvec"]).max() < 1e-9 and abs(abs(sol[2]) - kstar) < 1e-3 * kstar:
        kstar, dstar = abs(sol[2]), sol[1]
        err = float(np.abs(info["fvec"]).max())
    else:
        err = tol * hi
    return CriticalPoint(kappa_star=float(kstar), delta_star=float(dstar), method_tolerance=max(err, 1e-12 * kstar))


def critical_point_closed_form(G: complex, U: float = 1.0) -> CriticalPoint:
    """Triple-root condition of the cubic solved by hand."""
    g2 = abs(complex(G)) ** 2
    r = (g2 / (2 * U * U)) ** (1 / 3)
    return CriticalPoint(
        kappa_star=math.sqrt(16 * g2 + 12 * U * U * r * r), delta_star=3 * U * r, method_tolerance=0.0
    )


# ----------------------------------------------------------------------------
# exact-solution response


def exact_density_D0(N: int, U: float, Delta: float, kappa: float, G: complex, tol: float = 1e-12) -> float:
    """Mean site density of the exact steady state for on-site drive only."""
    u = U / N
    lam = abs(complex(G)) / abs(u)
    delta = 1 - complex(Delta, kappa / 2) / (2 * u)
    return collective_moment_unitary(0, 1, 0, lam, N, delta, tol).real / (2 * N)


def susceptibility(N, U, Delta, kappa, G, h: float = None, tol: float = 1e-12) -> float:
    """d nbar / d Delta by central differences, Richardson-corrected when stiff."""
    h = 1e-4 * abs(U) if h is None else h
    f = lambda d: exact_density_D0(N, U, d, kappa, G, tol)
    c1 = (f(Delta + h) - f(Delta - h)) / (2 * h)
    c2 = (f(Delta + h / 2) - f(Delta - h / 2)) / h
    if abs(c2 - c1) <= 0.01 * max(abs(c2), 1e-300):
        return c2
    return (4 * c2 - c1) / 3


@dataclass
class ScanResult:
    chi: dict
    chi_max: dict
    argmax: dict


def _peak(N, U, kappa, G, lo, hi):
    """Locate max |d nbar/d Delta| in [lo, hi] by nested bracketing of the jump."""
    f = lambda d: exact_density_D0(N, U, d, kappa, G)
    h = 1e-4 * abs(U)
    for _ in range(12):
        if hi - lo < 40 * h:
            break
        xs = np.linspace(lo, hi, 21)
        jumps = np.abs(np.diff([f(x) for x in xs]))
        i = int(np.argmax(jumps))
        lo, hi = xs[max(i - 1, 0)], xs[min(i + 2, len(xs) - 1)]
    res = minimize_scalar(
        lambda d: -abs(susceptibility(N, U, d, kappa, G)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-3 * h},
    )
    return float(res.x), float(-res.fun)


def susceptibility_scan(spec: ModelSpec, N_list: Iterable[int], kappa: float, delta_grid: Sequence[float], allow_edge: bool = False) -> ScanResult:
    """chi on a Delta grid, plus the refined maximum for each N.

    Sharp peaks narrower than the grid are caught through the largest jump
    of nbar between neighbouring grid points.
    """
    if spec.D != 0:
        raise ValueError("susceptibility scan uses the D = 0 closed forms")
    delta_grid = np.asarray(delta_grid, dtype=float)
    chi, cmax, amax = {}, {}, {}
    for N in N_list:
        vals = np.array([susceptibility(N, spec.U, d, kappa, spec.G) for d in delta_grid])
        for d, v in zip(delta_grid, vals):
            chi[(N, float(d))] = float(v)
        dens = np.array([exact_density_D0(N, spec.U, d, kappa, spec.G) for d in delta_grid])
        i = int(np.argmax(np.abs(np.diff(dens))))
        j = int(np.argmax(np.abs(vals)))
        cands = []
        for lo_i, hi_i in ((i, i + 1), (max(j - 1, 0), min(j + 1, len(delta_grid) - 1))):
            cands.append(_peak(N, spec.U, kappa, spec.G, delta_grid[max(lo_i - 1, 0)], delta_grid[min(hi_i + 1, len(delta_grid) - 1)]))
        x, v = max(cands, key=lambda c: c[1])
        if not allow_edge and (x <= delta_grid[0] + 1e-9 or x >= delta_grid[-1] - 1e-9 or j in (0, len(vals) - 1) and v <= abs(vals[j])):
            raise ScanError(f"susceptibility maximum at grid edge for N={N}")
        cmax[N] = v
        amax[N] = x
    return ScanResult(chi, cmax, amax)


def fit_exponent(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def exact_critical_estimate(
    G: complex,
    U: float = 1.0,
    sizes: tuple = (500, 1000),
    bracket: tuple = None,
    delta_grid: Sequence[float] = None,
    rel: float = 0.01,
) -> float:
    """Loss rate where chi_max stops growing with N, from the exact solution.

    Bisects on whether doubling N raises chi_max by more than half of the
    linear-in-N growth seen in the tristable region.
    """
    spec = ModelSpec(N=1, U=U, Delta=0.0, kappa=1.0, G=G)
    mf = critical_point_closed_form(G, U)
    if bracket is None:
        bracket = (0.5 * mf.kappa_star, 2.0 * mf.kappa_star)
    if delta_grid is None:
        delta_grid = np.linspace(0.0, 2 * mf.delta_star + 2 * abs(U), 61)
    n1, n2 = sizes
    growth_cut = 1 + 0.5 * (n2 / n1 - 1)

    def growing(kappa):
        r = susceptibility_scan(spec, [n1, n2], kappa, delta_grid, allow_edge=True)
        return r.chi_max[n2] / r.chi_max[n1] > growth_cut

    lo, hi = bracket
    if not growing(lo) or growing(hi):
        raise ScanError("critical loss rate not bracketed")
    while hi - lo > rel * hi:
        mid = 0.5 * (lo + hi)
        if growing(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
