"""Steady-state expectation values of the pair-driven lattice.

The steady state is the reduced state of a pure state on a doubled
system.  In the symmetric combination of the two copies it reads

    |Psi> = sum_m c_m K_+^m |0>,   c_m = (-1)^m / (m! (delta)_m),

with ``K_+ = 1/2 sum_j lam_j beta_j^dag^2`` written in singular modes.
Every physical normally ordered moment equals the corresponding moment
of ``|Psi>`` times ``2^{-(number of operators)/2}``.

Two evaluation routes exist: closed hypergeometric forms when all
singular values coincide, and form-factor series otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .formfactors import phi_general
from .model import ModelSpec, PairingSpectrum
from .specialfn import LogComplex, SeriesError, hyper_pfq, log_pochhammer_seq, logsumexp_complex

__all__ = [
    "ResonanceError",
    "Convention",
    "PurificationCoefficients",
    "ObservableSet",
    "ModeMoments",
    "collective_moment_unitary",
    "collective_moment_general",
    "local_moment_general",
    "normal_moment",
    "mode_moments",
    "mean_density",
    "site_correlations",
    "correlators",
    "default_displacements",
    "pcs_residual",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-12
MAX_CUTOFF = 1_000_000


class ResonanceError(ArithmeticError):
    """delta sits on a non-positive integer: the steady state is singular."""


def _check_delta(delta: complex) -> complex:
    delta = complex(delta)
    if delta.imag == 0 and delta.real <= 0 and float(delta.real).is_integer():
        raise ResonanceError(
            f"delta = {delta.real:g} is a multiphoton resonance; use kappa > 0"
        )
    return delta


def _sign(m: int) -> LogComplex:
    """The alternating factor (-1)^m carried by c_m."""
    return LogComplex(0.0, math.pi * m)


class Convention(Enum):
    EXPLICIT_FACTORIAL = "explicit-factorial"
    ABSORBED_FACTORIAL = "absorbed-factorial"


@dataclass(frozen=True)
class PurificationCoefficients:
    """Expansion coefficients of |Psi> in powers of K_+.

    ``EXPLICIT_FACTORIAL`` pairs ``c_m`` with an explicit ``1/m!`` in the sum;
    ``ABSORBED_FACTORIAL`` absorbs it.  Both describe the same state.
    """

    delta: complex
    convention: Convention = Convention.ABSORBED_FACTORIAL

    def coefficient(self, m: int) -> LogComplex:
        from .specialfn import pochhammer

        d = _check_delta(self.delta)
        c = _sign(m) / pochhammer(d, m)
        if self.convention is Convention.ABSORBED_FACTORIAL:
            c = c / LogComplex(float(gammaln(m + 1)), 0.0)
        return c


# ----------------------------------------------------------------------------
# series plumbing


def _tail_ok(logs: np.ndarray, tol: float) -> bool:
    """Three trailing terms negligible against the partial sums, and decaying."""
    if len(logs) < 4:
        return False
    re = logs.real
    fin = np.isfinite(re)
    if not fin.any():
        return True
    peak = re[fin].max()
    tail = re[-3:]
    if not np.all(tail < peak + math.log(tol) - 2.3):
        return False
    return bool(re[-1] <= re[-2] or not np.isfinite(re[-1]))


def _initial_cutoff(lam_star: float, s: int, delta: complex) -> int:
    """Index past which the collective series decays geometrically."""
    if lam_star == 0:
        return 64
    z = lam_star ** 2
    l = 1.0
    while True:
        r = z * (0.5 * s + l) / ((l + 1) * abs(delta + l) ** 2)
        if r < 0.25 and l > -delta.real:
            break
        l *= 1.25
        if l > MAX_CUTOFF:
            break
    return int(max(64, 2 * l + 16))


def _norm_logs(F: np.ndarray, delta: complex) -> np.ndarray:
    lp = log_pochhammer_seq(delta, len(F))
    return F - 2 * lp.real


@dataclass
class _Collective:
    """Collective form factor and normalisation for one (lam, delta)."""

    lam: tuple
    delta: complex
    tol: float
    K: int = 0
    F: np.ndarray = field(default=None, repr=False)
    log_norm: float = 0.0

    def __post_init__(self):
        lam_star = max(self.lam) if self.lam else 0.0
        s = sum(1 for x in self.lam if abs(x - lam_star) <= 1e-10 * max(1, lam_star))
        K = _initial_cutoff(lam_star, s, self.delta)
        while True:
            F = _collective_table(self.lam, K)
            logs = _norm_logs(F, self.delta)
            if lam_star == 0 or _tail_ok(logs.astype(complex), self.tol):
                break
            K *= 2
            if K > MAX_CUTOFF:
                raise SeriesError("collective series did not converge within the cutoff budget")
        self.K = K
        self.F = F
        self.log_norm = logsumexp_complex(logs).log_mag

    def ensure(self, K: int):
        if K > self.K:
            self.F = _collective_table(self.lam, K)
            self.K = K


def _collective_table(lam: tuple, K: int) -> np.ndarray:
    # with half the singular values the generalised table reduces to the
    # squared norms of K_+^l|0>/l!
    N = len(lam)
    half = tuple(0.5 * x for x in lam)
    return phi_general(half, (0,) * N, (0,) * N, (False,) * N, K).log_values


@lru_cache(maxsize=256)
def _collective(lam: tuple, delta: complex, tol: float) -> _Collective:
    return _Collective(lam, delta, tol)


def _lam_key(spectrum: PairingSpectrum) -> tuple:
    # one representative per class keeps cache keys stable under rounding
    lam = np.array(spectrum.lam, dtype=float)
    for members in spectrum.classes:
        lam[list(members)] = lam[members[0]]
    return tuple(float(x) for x in lam)


# ----------------------------------------------------------------------------
# collective moments


def collective_moment_unitary(
    n: int, k: int, m: int, lam: float, N: int, delta: complex, tol: float = DEFAULT_TOL
) -> complex:
    """<K_+^n N_+^k K_-^m> for N modes sharing singular value ``lam``."""
    delta = _check_delta(delta)
    if min(n, k, m) < 0:
        raise ValueError("exponents must be non-negative")
    h = N / 2
    z = lam * lam
    norm = hyper_pfq([h], [delta, delta.conjugate()], z, tol=tol)
    if lam == 0:
        if n > 0 or k > 0:
            return 0j
    pref = _sign(n + m)
    pref = pref * _poch(h, n) * _poch(h, m) / (_poch(delta.conjugate(), n) * _poch(delta, m))
    if n:
        pref = pref * LogComplex(2 * n * math.log(lam), 0.0)
    num = hyper_pfq(
        [h + n, h + m],
        [h, delta.conjugate() + n, delta + m],
        z,
        tol=tol,
        derivative=k,
    )
    val = pref * num.value / norm.value
    return val.to_complex()


def _poch(a, m) -> LogComplex:
    from .specialfn import pochhammer

    return pochhammer(a, m)


def collective_moment_general(
    n: int, k: int, m: int, spectrum: PairingSpectrum, delta: complex, tol: float = DEFAULT_TOL
) -> complex:
    """<K_+^n N_+^k K_-^m> from the collective form-factor series."""
    delta = _check_delta(delta)
    if min(n, k, m) < 0:
        raise ValueError("exponents must be non-negative")
    lam = _lam_key(spectrum)
    N = len(lam)
    h = N / 2
    col = _collective(lam, delta, tol)
    dc = delta.conjugate()
    K = col.K
    while True:
        col.ensure(K + n)
        l = np.arange(K + 1)
        logs = (
            log_pochhammer_seq(h + m, K + 1)
            + gammaln(n + l + 1)
            + col.F[n : n + K + 1]
            - log_pochhammer_seq(dc + n, K + 1)
            - log_pochhammer_seq(delta + m, K + 1)
            - log_pochhammer_seq(h, K + 1)
            - gammaln(l + 1)
        )
        if k:
            with np.errstate(divide="ignore"):
                logs = logs + k * np.log(2.0 * l)
        if _tail_ok(logs, tol) or not np.isfinite(col.F[n : n + K + 1]).any():
            break
        K *= 2
        if K > MAX_CUTOFF:
            raise SeriesError("cutoff budget exhausted")
    pref = _sign(n + m) * _poch(h, m) / (_poch(dc, n) * _poch(delta, m))
    s = logsumexp_complex(logs)
    return (pref * s / LogComplex(col.log_norm, 0.0)).to_complex()


# ----------------------------------------------------------------------------
# local moments in the singular-mode basis


def _local_psi(n_vec, m_vec, b_vec, lam: tuple, delta: complex, tol: float) -> complex:
    """Normalised moment of |Psi> with exponents 2n+b (creation), 2m+b."""
    N = len(lam)
    n_vec = tuple(int(x) for x in n_vec)
    m_vec = tuple(int(x) for x in m_vec)
    b_vec = tuple(int(bool(x)) for x in b_vec)
    if not (len(n_vec) == len(m_vec) == len(b_vec) == N):
        raise ValueError("exponent vectors must have length N")
    for j in range(N):
        if lam[j] == 0 and n_vec[j] + m_vec[j] + 2 * b_vec[j] > 0:
            return 0j
    A = sum(n_vec) + sum(b_vec)
    B = sum(m_vec) + sum(b_vec)
    col = _collective(lam, delta, tol)
    dc = delta.conjugate()
    log_pref = 0.0
    for j in range(N):
        e = n_vec[j] + m_vec[j] + 2 * b_vec[j]
        if e:
            log_pref += e * math.log(2 * lam[j])
            log_pref += float(gammaln(0.5 + n_vec[j] + b_vec[j]) - gammaln(0.5))
            log_pref += float(gammaln(0.5 + m_vec[j] + b_vec[j]) - gammaln(0.5))
    pref = LogComplex(log_pref, 0.0) * _sign(A + B) / (_poch(dc, A) * _poch(delta, B))
    half = tuple(0.5 * x for x in lam)
    K = col.K
    while True:
        T = phi_general(half, n_vec, m_vec, b_vec, K).log_values
        logs = T - log_pochhammer_seq(dc + A, K + 1) - log_pochhammer_seq(delta + B, K + 1)
        if _tail_ok(logs, tol):
            break
        K *= 2
        if K > MAX_CUTOFF:
            raise SeriesError("cutoff budget exhausted")
    s = logsumexp_complex(logs)
    return (pref * s / LogComplex(col.log_norm, 0.0)).to_complex()


def local_moment_general(
    n_vec: Sequence[int],
    m_vec: Sequence[int],
    b_vec: Sequence[bool],
    spectrum: PairingSpectrum,
    delta: complex,
    tol: float = DEFAULT_TOL,
) -> complex:
    """Physical moment <b^dag^(2n+b) b^(2m+b)> in the singular-mode basis."""
    delta = _check_delta(delta)
    lam = _lam_key(spectrum)
    val = _local_psi(n_vec, m_vec, b_vec, lam, delta, tol)
    ops = 2 * (sum(n_vec) + sum(m_vec)) + 2 * sum(bool(x) for x in b_vec)
    return val * 2.0 ** (-ops / 2)


def normal_moment(p_vec, q_vec, spectrum, delta, tol: float = DEFAULT_TOL) -> complex:
    """<b^dag^p b^q> for arbitrary exponent vectors; zero unless parities match."""
    p_vec = [int(x) for x in p_vec]
    q_vec = [int(x) for x in q_vec]
    if any((p - q) % 2 for p, q in zip(p_vec, q_vec)):
        return 0j
    b = [p % 2 for p in p_vec]
    n = [(p - bb) // 2 for p, bb in zip(p_vec, b)]
    m = [(q - bb) // 2 for q, bb in zip(q_vec, b)]
    return local_moment_general(n, m, b, spectrum, delta, tol)


# ----------------------------------------------------------------------------
# mode-resolved second and fourth moments


@dataclass(frozen=True)
class ModeMoments:
    """Physical singular-mode moments needed for all site correlators.

    occ[j] = <b_j^dag b_j>, pair[j] = <b_j^2>,
    P[j, j'] = <b_j^dag^2 b_j'^2>, Q[j, j'] = <b_j^dag b_j'^dag b_j b_j'> (j != j').
    """

    occ: np.ndarray
    pair: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    route: str


def _unitary_mode_moments(lam: float, N: int, delta: complex, tol: float) -> ModeMoments:
    cm = lambda n, k, m: collective_moment_unitary(n, k, m, lam, N, delta, tol)
    Nplus = cm(0, 1, 0).real
    N2 = cm(0, 2, 0).real
    Km = cm(0, 0, 1)
    C = 4 * cm(1, 0, 1).real  # <(sum beta^dag^2)(sum beta^2)>
    D2 = N2 - Nplus  # <N(N-1)>
    # O(N)-invariant quartic tensor x d_ab d_cd + y (d_ac d_bd + d_ad d_bc)
    if N == 1:
        x, y = D2, 0.0
    else:
        y = (N * D2 - C) / (N * (N + 2) * (N - 1))
        x = D2 / N - (N + 1) * y
    occ = np.full(N, Nplus / N)
    pair = np.full(N, 2 * lam * Km / N) if lam else np.zeros(N, complex)
    P = np.full((N, N), x, dtype=complex)
    np.fill_diagonal(P, x + 2 * y)
    Q = np.full((N, N), y, dtype=complex)
    np.fill_diagonal(Q, 0)
    return ModeMoments(occ * 0.5, pair * 0.5, P * 0.25, Q * 0.25, "unitary")


def _general_mode_moments(spectrum: PairingSpectrum, delta: complex, tol: float) -> ModeMoments:
    lam = _lam_key(spectrum)
    N = len(lam)
    classes = spectrum.classes
    rep = [c[0] for c in classes]
    occ = np.zeros(N)
    pair = np.zeros(N, complex)
    P = np.zeros((N, N), complex)
    Q = np.zeros((N, N), complex)
    z = [0] * N

    def e(*idx):
        v = list(z)
        for i in idx:
            v[i] += 1
        return v

    for ci, members in enumerate(classes):
        j = rep[ci]
        o = _local_psi(z, z, e(j), lam, delta, tol).real
        p = _local_psi(z, e(j), z, lam, delta, tol)
        occ[list(members)] = o
        pair[list(members)] = p
    for ci, mi in enumerate(classes):
        for cj, mj in enumerate(classes):
            if cj < ci:
                continue
            j = rep[ci]
            pairs = []
            if ci == cj:
                pairs.append(("diag", j, j))
                if len(mi) > 1:
                    pairs.append(("off", j, mi[1]))
            else:
                pairs.append(("off", j, rep[cj]))
            for kind, a, b in pairs:
                pv = _local_psi(e(a), e(b), z, lam, delta, tol)
                if kind == "diag":
                    for t in mi:
                        P[t, t] = pv
                    continue
                qv = _local_psi(z, z, e(a, b), lam, delta, tol).real
                for s_ in mi:
                    for t in mj:
                        if s_ == t:
                            continue
                        P[s_, t] = pv
                        P[t, s_] = np.conj(pv)
                        Q[s_, t] = Q[t, s_] = qv
    return ModeMoments(occ * 0.5, pair * 0.5, P * 0.25, Q * 0.25, "general")


def mode_moments(
    spectrum: PairingSpectrum, delta: complex, N: int, tol: float = DEFAULT_TOL, route: str = "auto"
) -> ModeMoments:
    delta = _check_delta(delta)
    if route == "auto":
        route = "unitary" if spectrum.is_unitary else "general"
    if route == "unitary":
        if not spectrum.is_unitary:
            raise ValueError("unitary route needs degenerate singular values")
        return _unitary_mode_moments(float(spectrum.lam_star), N, delta, tol)
    return _general_mode_moments(spectrum, delta, tol)


def mean_density(spectrum: PairingSpectrum, delta: complex, tol: float = DEFAULT_TOL) -> float:
    """Site-averaged density, skipping the quartic moments."""
    delta = _check_delta(delta)
    N = spectrum.N
    if spectrum.is_unitary:
        lam = float(spectrum.lam_star)
        return collective_moment_unitary(0, 1, 0, lam, N, delta, tol).real / (2 * N)
    lam = _lam_key(spectrum)
    z = [0] * N
    total = 0.0
    for members in spectrum.classes:
        b = list(z)
        b[members[0]] = 1
        total += len(members) * _local_psi(z, z, b, lam, delta, tol).real
    return 0.5 * total / N


# ----------------------------------------------------------------------------
# physical-site correlators


def site_correlations(spectrum: PairingSpectrum, mm: ModeMoments, pairs=None):
    """Site-basis correlators for a list of (i, k) site pairs.

    Returns dict with arrays ``one`` = <a_i^dag a_k>, ``pairing`` = <a_i a_k>,
    ``nn`` = <n_i n_k> and the densities ``n`` of every site.
    """
    V = spectrum.V
    N = V.shape[0]
    if pairs is None:
        pairs = [(i, k) for i in range(N) for k in range(N)]
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    I, Kk = pairs[:, 0], pairs[:, 1]
    dens = (np.abs(V) ** 2) @ mm.occ
    one = np.einsum("pj,pj,j->p", V[I].conj(), V[Kk], mm.occ)
    pairing = np.einsum("pj,pj,j->p", V[I], V[Kk], mm.pair)
    W = V[I] * V[Kk]
    t1 = np.einsum("pj,jl,pl->p", W.conj(), mm.P, W)
    Y = V[I].conj() * V[Kk]
    t2 = np.einsum("pj,jl,pl->p", Y, mm.Q, Y.conj())
    Aa = np.abs(V[I]) ** 2
    Bb = np.abs(V[Kk]) ** 2
    t3 = np.einsum("pj,jl,pl->p", Aa, mm.Q.real, Bb)
    quart = t1 + t2 + t3
    nn = quart.real + np.where(I == Kk, dens[I], 0.0)
    return {"pairs": pairs, "one": one, "pairing": pairing, "nn": nn, "quartic": quart, "n": dens}


def _site_shape(spec: ModelSpec) -> tuple:
    return spec.dims if spec.dims else (spec.N,)


def default_displacements(spec: ModelSpec) -> list:
    L = _site_shape(spec)[0]
    return list(range(0, L // 2 + 1))


def _displaced_pairs(spec: ModelSpec, r: int):
    shape = _site_shape(spec)
    periodic = spec.boundary == "periodic" or spec.D == 0
    out = []
    for i in range(spec.N):
        idx = list(np.unravel_index(i, shape))
        j0 = idx[0] + r
        if periodic:
            j0 %= shape[0]
        elif not 0 <= j0 < shape[0]:
            continue
        idx[0] = j0
        out.append((i, int(np.ravel_multi_index(tuple(idx), shape))))
    return out


@dataclass
class ObservableSet:
    nbar: float
    one_particle: dict
    pairing: dict
    g2: dict
    g2_local: dict
    g2_K: Optional[float]
    g2_phi: Optional[float]
    norm: float = 1.0
    densities: np.ndarray = field(default=None, repr=False)
    flags: tuple = ()

    @property
    def g2_inf(self) -> float:
        r = max(self.g2, key=abs)
        return self.g2[r]


def correlators(
    spec: ModelSpec,
    spectrum: PairingSpectrum,
    delta: complex,
    displacements: Optional[Iterable[int]] = None,
    tol: float = DEFAULT_TOL,
    route: str = "auto",
) -> ObservableSet:
    delta = _check_delta(delta)
    if displacements is None:
        displacements = default_displacements(spec)
    displacements = sorted(set(int(r) for r in displacements), key=lambda r: (abs(r), r))
    mm = mode_moments(spectrum, delta, spec.N, tol, route)
    V = spectrum.V
    dens = (np.abs(V) ** 2) @ mm.occ
    nbar = float(dens.mean())
    flags = []
    one, pairing, g2, g2l = {}, {}, {}, {}
    for r in displacements:
        pr = _displaced_pairs(spec, r)
        if not pr:
            continue
        sc = site_correlations(spectrum, mm, pr)
        one[r] = complex(sc["one"].mean())
        pairing[r] = complex(sc["pairing"].mean())
        I, K = sc["pairs"][:, 0], sc["pairs"][:, 1]
        if nbar > 0:
            g2[r] = float(((sc["nn"] - nbar ** 2) / nbar ** 2).mean())
            with np.errstate(invalid="ignore", divide="ignore"):
                g2l[r] = float(((sc["nn"] - dens[I] * dens[K]) / (dens[I] * dens[K])).mean())
        else:
            g2[r] = g2l[r] = 0.0
    if spec.boundary == "open" or max(abs(r) for r in one) < _site_shape(spec)[0] // 2:
        flags.append("finite-size")
    # pair-lowering correlator
    g2_K = None
    lam = np.asarray(spectrum.lam)
    if np.all(lam > 0):
        km = 0.5 * np.sum(mm.pair / lam)
        kk = 0.25 * np.real(np.sum(mm.P / np.outer(lam, lam)))
        g2_K = float(kk / abs(km) ** 2 - 1) if abs(km) > 0 else None
    else:
        flags.append("singular-M: g2_K omitted")
    # on-site pair field
    sc0 = site_correlations(spectrum, mm, [(i, i) for i in range(spec.N)])
    phi = sc0["pairing"]
    dd = sc0["quartic"].real
    g2_phi = None
    if np.all(np.abs(phi) > 0):
        g2_phi = float(np.mean((dd - np.abs(phi) ** 2) / np.abs(phi) ** 2))
    return ObservableSet(
        nbar=nbar,
        one_particle=one,
        pairing=pairing,
        g2=g2,
        g2_local=g2l,
        g2_K=g2_K,
        g2_phi=g2_phi,
        norm=1.0,
        densities=dens,
        flags=tuple(flags),
    )


# ----------------------------------------------------------------------------
# pair coherent state check


def pcs_residual(spec: ModelSpec, spectrum: PairingSpectrum, delta: complex, cutoff: int) -> float:
    """||(K_- + 1)|Psi>|| / |||Psi>|| with |Psi> truncated at ``cutoff`` pairs."""
    delta = _check_delta(delta)
    lam = _lam_key(spectrum)
    if min(lam) <= 0:
        raise ValueError("K_- needs every singular value positive")
    h = spec.N / 2
    F = _collective_table(lam, cutoff)
    lp = log_pochhammer_seq(delta, cutoff + 1)
    w = F - 2 * lp.real  # |c_m|^2 ||K_+^m|0>||^2
    m = np.arange(cutoff + 1)
    ratio = np.abs((delta - h) / (delta + m)) ** 2
    with np.errstate(divide="ignore"):
        lr = np.log(ratio)
    d = w + lr
    d[-1] = w[-1]  # the missing (cutoff+1) term leaves c_cutoff unmatched
    num = logsumexp_complex(d.astype(complex)).log_mag
    den = logsumexp_complex(w.astype(complex)).log_mag
    return float(math.exp(0.5 * (num - den)))
