"""Brute-force truncated-Fock reference solutions.

The steady state of the Lindbladian is found without forming the
d^2 x d^2 superoperator.  Writing L(rho) = -i(H_eff rho - rho H_eff^dag)
+ kappa J(rho) with J(rho) = sum_j a_j rho a_j^dag, a steady state is a
fixed point of rho -> -i kappa S^{-1}(J(rho)), where S(X) = H_eff X -
X H_eff^dag is inverted by diagonalising H_eff.  Photon parity splits
the map into even and odd blocks, and the composed even -> odd -> even
map has the steady state as its eigenvalue-one eigenvector, found with
ARPACK.  The Lindblad residual is always checked afterwards.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import eval_genlaguerre, gammaln

from .model import ModelSpec, build_pairing_matrix

__all__ = [
    "FockConfig",
    "SteadyStateOracle",
    "OracleError",
    "steady_state",
    "auto_fock",
    "purification_state",
    "reduced_state",
    "htrs_residual",
    "hopping_invariance",
    "imaginary_hopping",
    "real_hopping",
    "nonthermality",
    "trace_distance",
    "oracle_wigner",
    "fock_pcs_residual",
]

log = logging.getLogger(__name__)


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class FockConfig:
    """Truncated Fock basis: n_j <= per_mode_cutoff and sum n_j <= total_cutoff."""

    n_modes: int
    per_mode_cutoff: int
    total_cutoff: int

    @cached_property
    def basis(self) -> list:
        nmax, T = self.per_mode_cutoff, self.total_cutoff
        out = []
        # lexicographic order
        for occ in itertools.product(range(nmax + 1), repeat=self.n_modes):
            if sum(occ) <= T:
                out.append(occ)
        return out

    @property
    def dim(self) -> int:
        return len(self.basis)

    @cached_property
    def index(self) -> dict:
        return {occ: i for i, occ in enumerate(self.basis)}

    @cached_property
    def annihilators(self) -> list:
        idx = self.index
        ops = []
        for j in range(self.n_modes):
            rows, cols, vals = [], [], []
            for c, occ in enumerate(self.basis):
                if occ[j] == 0:
                    continue
                new = list(occ)
                new[j] -= 1
                rows.append(idx[tuple(new)])
                cols.append(c)
                vals.append(math.sqrt(occ[j]))
            ops.append(sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim)))
        return ops

    @cached_property
    def number(self) -> np.ndarray:
        return np.array([sum(o) for o in self.basis])


@dataclass
class SteadyStateOracle:
    rho: np.ndarray
    residual: float
    truncation_indicator: float
    fock: FockConfig
    min_eig: float = 0.0
    H: Optional[np.ndarray] = field(default=None, repr=False)

    def expect(self, op) -> complex:
        if sp.issparse(op):
            return complex((op.multiply(self.rho.T)).sum())
        return complex(np.sum(op * self.rho.T))

    @property
    def truncation_error(self) -> float:
        """Conservative error scale for observables up to quartic order."""
        T = self.fock.total_cutoff
        return float(self.truncation_indicator * (T + 1) ** 2)

    def site_correlations(self):
        """Full site matrices <a_i^dag a_k>, <a_i a_k>, <n_i n_k>, <a_i^dag^2 a_i^2>."""
        A = self.fock.annihilators
        N = len(A)
        one = np.zeros((N, N), complex)
        pair = np.zeros((N, N), complex)
        nn = np.zeros((N, N))
        for i in range(N):
            for k in range(N):
                one[i, k] = self.expect(A[i].T @ A[k])
                pair[i, k] = self.expect(A[i] @ A[k])
                ni = A[i].T @ A[i]
                nk = A[k].T @ A[k]
                nn[i, k] = self.expect(ni @ nk).real
        return {"one": one, "pairing": pair, "nn": nn, "n": np.real(np.diag(one))}


def _hamiltonian(spec: ModelSpec, fock: FockConfig, extra: Optional[np.ndarray] = None):
    A = fock.annihilators
    N = len(A)
    M = build_pairing_matrix(spec)
    u = spec.U / spec.N
    Nop = sp.diags(fock.number.astype(float))
    H = (u * Nop @ Nop - spec.Delta * Nop).astype(complex)
    for i in range(N):
        for j in range(N):
            if M[i, j] != 0:
                P = M[i, j] * (A[i].T @ A[j].T)
                H = H + P + P.conj().T
    if extra is not None:
        for i in range(N):
            for j in range(N):
                if extra[i, j] != 0:
                    H = H + extra[i, j] * (A[i].T @ A[j])
    return sp.csr_matrix(H)


def _lindblad(H, A, kappa, rho):
    out = -1j * (H @ rho - rho @ H.conj().T)
    for a in A:
        ad = a.T
        out = out + kappa * (a @ rho @ ad - 0.5 * (ad @ (a @ rho)) - 0.5 * ((rho @ ad) @ a))
    return out


class _Block:
    """Sylvester inverse S^{-1}(C) for one parity block of H_eff."""

    def __init__(self, Heff):
        D, R = np.linalg.eig(Heff)
        self.R = R
        self.Ri = np.linalg.inv(R)
        self.den = D[:, None] - D.conj()[None, :]
        self.min_den = float(np.abs(self.den).min())

    def solve(self, C):
        X = (self.Ri @ C @ self.Ri.conj().T) / self.den
        return self.R @ X @ self.R.conj().T


def steady_state(
    spec: ModelSpec,
    fock: FockConfig,
    extra_hamiltonian: Optional[np.ndarray] = None,
    tol: float = 1e-13,
    max_dim: int = 4096,
    check_unique: bool = False,
) -> SteadyStateOracle:
    if fock.n_modes != spec.N:
        raise OracleError("Fock space must have one mode per site")
    d = fock.dim
    if d > max_dim:
        raise OracleError(f"basis dimension {d} exceeds {max_dim}")
    A = fock.annihilators
    H = _hamiltonian(spec, fock, extra_hamiltonian)
    kappa = spec.kappa
    M = build_pairing_matrix(spec)
    if np.all(M == 0):
        rho = np.zeros((d, d), complex)
        rho[0, 0] = 1.0
        return _finish(spec, fock, H, A, rho)
    if kappa <= 0:
        raise OracleError("the fixed-point solver needs kappa > 0")
    Hd = H.toarray()
    Nop = fock.number
    Heff = Hd - 0.5j * kappa * np.diag(Nop)
    ev = np.nonzero(Nop % 2 == 0)[0]
    od = np.nonzero(Nop % 2 == 1)[0]
    Be = _Block(Heff[np.ix_(ev, ev)])
    Bo = _Block(Heff[np.ix_(od, od)])
    a_oe = [a.tocsr()[od][:, ev] for a in A]  # even -> odd
    a_eo = [a.tocsr()[ev][:, od] for a in A]  # odd -> even
    ne = len(ev)

    def to_odd(re):
        J = sum(a @ (a @ re.T).T for a in a_oe)  # a re a^T
        return -1j * kappa * Bo.solve(J)

    def to_even(ro):
        J = sum(a @ (a @ ro.T).T for a in a_eo)
        return -1j * kappa * Be.solve(J)

    def matvec(x):
        re = x.reshape(ne, ne)
        return to_even(to_odd(re)).ravel()

    op = spla.LinearOperator((ne * ne, ne * ne), matvec=matvec, dtype=complex)

    def fixed_point(v0):
        if ne * ne <= 4:
            dense = np.column_stack([matvec(e) for e in np.eye(ne * ne, dtype=complex)])
            w, vecs = np.linalg.eig(dense)
        else:
            w, vecs = spla.eigs(op, k=1, which="LM", v0=v0, tol=tol, ncv=min(ne * ne - 1, 30))
        i = int(np.argmin(np.abs(w - 1)))
        if abs(w[i] - 1) > 1e-8:
            raise OracleError(f"fixed-point map has no unit eigenvalue (closest {w[i]:.6g})")
        x = vecs[:, i].reshape(ne, ne)
        return x / np.trace(x)

    re = fixed_point(np.eye(ne, dtype=complex).ravel() / ne)
    if check_unique:
        rng = np.random.default_rng(12345)
        X = rng.normal(size=(ne, ne)) + 1j * rng.normal(size=(ne, ne))
        re2 = fixed_point((X @ X.conj().T).ravel())
        if np.abs(re2 - re).max() > 1e-8:
            raise OracleError("degenerate steady-state manifold")
    ro = to_odd(re)
    rho = np.zeros((d, d), complex)
    rho[np.ix_(ev, ev)] = re
    rho[np.ix_(od, od)] = ro
    return _finish(spec, fock, H, A, rho)


def _finish(spec, fock, H, A, rho):
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    res = float(np.abs(_lindblad(H, A, spec.kappa, rho)).max())
    w = np.linalg.eigvalsh(rho)
    T = fock.total_cutoff
    shell = np.real(np.diag(rho))[fock.number >= T - 1].sum()
    if w.min() < -1e-10:
        log.warning("steady state has negative eigenvalue %.3g", w.min())
    if shell > 1e-6:
        log.warning("cutoff shell population %.3g", shell)
    if shell > 1e-3:
        raise OracleError(f"cutoff shell population {shell:.3g} too large")
    return SteadyStateOracle(
        rho=rho,
        residual=res,
        truncation_indicator=float(max(shell, 0.0)),
        fock=fock,
        min_eig=float(w.min()),
        H=H,
    )


def auto_fock(N: int, nbar_est: float, max_dim: int = 1400, floor: int = 12) -> FockConfig:
    """Total-number cutoff sized from an estimate of the mean density."""
    T = int(max(floor, math.ceil(8 * N * nbar_est) + 10))
    T += T % 2
    while T > 2 and math.comb(T + N, N) > max_dim:
        T -= 2
    return FockConfig(N, T, T)


def trace_distance(r1: np.ndarray, r2: np.ndarray) -> float:
    return float(0.5 * np.abs(np.linalg.eigvalsh(r1 - r2)).sum())


# ----------------------------------------------------------------------------
# purification on the doubled space


def _doubled_ops(fock2: FockConfig, N: int):
    A = fock2.annihilators
    aL, aR = A[:N], A[N:]
    s = 1 / math.sqrt(2)
    ap = [s * (l + r) for l, r in zip(aL, aR)]
    am = [s * (l - r) for l, r in zip(aL, aR)]
    return aL, aR, ap, am


def purification_state(spec: ModelSpec, fock2: FockConfig) -> np.ndarray:
    """Pure state on L x R whose L-marginal is the steady state."""
    N = spec.N
    if fock2.n_modes != 2 * N:
        raise OracleError("doubled Fock space needs 2N modes")
    u = spec.U / spec.N
    delta = spec.derived.delta
    M = build_pairing_matrix(spec) / u
    _, _, ap, _ = _doubled_ops(fock2, N)
    Kp = sp.csr_matrix((fock2.dim, fock2.dim), dtype=complex)
    for i in range(N):
        for j in range(N):
            if M[i, j] != 0:
                Kp = Kp + 0.5 * M[i, j] * (ap[i].T @ ap[j].T)
    v = np.zeros(fock2.dim, complex)
    v[0] = 1.0
    psi = v.copy()
    term = v
    for m in range(1, fock2.total_cutoff // 2 + 1):
        term = Kp @ term * (-1.0 / (m * (delta + m - 1)))
        psi = psi + term
    psi = psi / np.linalg.norm(psi)
    top = np.abs(psi[fock2.number >= fock2.total_cutoff - 1]) ** 2
    if top.sum() > 1e-6:
        raise OracleError(f"doubled-space truncation population {top.sum():.3g}")
    return psi


def reduced_state(psi: np.ndarray, fock2: FockConfig, fock: FockConfig) -> np.ndarray:
    """Partial trace over the R copy, expressed in ``fock``'s basis."""
    N = fock.n_modes
    rho = np.zeros((fock.dim, fock.dim), complex)
    groups: dict = {}
    for c, occ in enumerate(fock2.basis):
        if abs(psi[c]) == 0:
            continue
        L, R = occ[:N], occ[N:]
        if L not in fock.index:
            continue
        groups.setdefault(R, []).append((fock.index[L], psi[c]))
    for items in groups.values():
        idx = np.array([i for i, _ in items])
        amp = np.array([a for _, a in items])
        rho[np.ix_(idx, idx)] += np.outer(amp, amp.conj())
    return rho


def htrs_residual(spec: ModelSpec, psi: np.ndarray, fock2: FockConfig) -> float:
    """Norm of the hidden time-reversal conditions applied to ``psi``."""
    N = spec.N
    u = spec.U / spec.N
    Deff = spec.derived.Delta_eff
    M = build_pairing_matrix(spec)
    aL, aR, ap, am = _doubled_ops(fock2, N)
    NL = sum(a.T @ a for a in aL)
    NR = sum(a.T @ a for a in aR)
    Id = sp.identity(fock2.dim, format="csr")
    C1 = (u * (NL + NR) - Deff * Id) @ (NL - NR)
    for i in range(N):
        for j in range(N):
            if M[i, j] != 0:
                C1 = C1 + 2 * M[i, j] * (ap[i].T @ am[j].T)
    # drop components pushed past the cutoff by the creation operators
    keep = fock2.number <= fock2.total_cutoff - 2
    v1 = (C1 @ psi)[keep]
    r2 = sum(np.linalg.norm(a @ psi) ** 2 for a in am)
    return float(math.sqrt(np.linalg.norm(v1) ** 2 + r2))


def fock_pcs_residual(spec: ModelSpec, psi: np.ndarray, fock2: FockConfig) -> float:
    """||(K_- + 1) psi|| on the doubled space, K_- = 1/2 sum (u M^-1)_ij a+_i a+_j."""
    N = spec.N
    u = spec.U / spec.N
    Minv = np.linalg.inv(build_pairing_matrix(spec) / u)
    _, _, ap, _ = _doubled_ops(fock2, N)
    Km = sp.csr_matrix((fock2.dim, fock2.dim), dtype=complex)
    for i in range(N):
        for j in range(N):
            if Minv[i, j] != 0:
                Km = Km + 0.5 * Minv[i, j] * (ap[i] @ ap[j])
    v = Km @ psi + psi
    keep = fock2.number <= fock2.total_cutoff - 2
    return float(np.linalg.norm(v[keep]))


# ----------------------------------------------------------------------------
# symmetry and thermality checks


def imaginary_hopping(t: np.ndarray) -> np.ndarray:
    """Hopping matrix h for dH = i sum t_ij (a_i^dag a_j - a_j^dag a_i)."""
    t = np.asarray(t, dtype=float)
    return 1j * (t - t.T)


def real_hopping(t: np.ndarray) -> np.ndarray:
    """Hopping matrix h for dH = sum t_ij (a_i^dag a_j + a_j^dag a_i)."""
    t = np.asarray(t, dtype=float)
    return (t + t.T).astype(complex)


def hopping_invariance(spec: ModelSpec, fock: FockConfig, hopping: np.ndarray) -> float:
    """Trace distance between steady states with and without ``hopping``."""
    h = np.asarray(hopping, dtype=complex)
    if np.abs(h - h.conj().T).max() > 1e-14:
        raise ValueError("hopping matrix must be Hermitian")
    r0 = steady_state(spec, fock).rho
    if not np.any(h):
        return 0.0
    r1 = steady_state(spec, fock, extra_hamiltonian=h).rho
    return trace_distance(r0, r1)


def nonthermality(spec: ModelSpec, fock: FockConfig, ss: Optional[SteadyStateOracle] = None) -> float:
    """max |[H, rho_ss]| entry."""
    ss = ss or steady_state(spec, fock)
    H = ss.H
    C = H @ ss.rho - ss.rho @ H.conj().T
    return float(np.abs(C).max())


# ----------------------------------------------------------------------------
# Wigner function of a truncated density matrix


def _single_mode_wigner_table(alpha: complex, nmax: int) -> np.ndarray:
    """W_{mn}(alpha) for |m><n|, excluding the (2/pi) prefactor."""
    x = 4 * abs(alpha) ** 2
    W = np.zeros((nmax + 1, nmax + 1), complex)
    g = np.exp(-2 * abs(alpha) ** 2)
    for m in range(nmax + 1):
        for n in range(m, nmax + 1):
            k = n - m
            c = (-1) ** m * math.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)))
            val = c * (2 * alpha) ** k * g * eval_genlaguerre(m, k, x)
            W[m, n] = val
            W[n, m] = np.conj(val)
    return W


def oracle_wigner(ss: SteadyStateOracle, alpha: Sequence[complex]) -> float:
    """W(alpha) = (2/pi)^N Tr[rho D(alpha) P D(alpha)^dag] from the Fock matrix."""
    fock = ss.fock
    alpha = np.asarray(alpha, dtype=complex)
    N = fock.n_modes
    nmax = fock.per_mode_cutoff
    tabs = [_single_mode_wigner_table(alpha[j], nmax) for j in range(N)]
    B = np.array(fock.basis)
    # Wigner kernel of |p><q| is prod_j W_{p_j q_j}
    K = np.ones((fock.dim, fock.dim), complex)
    for j in range(N):
        K *= tabs[j][np.ix_(B[:, j], B[:, j])]
    # rho = sum rho_pq |p><q|
    val = np.sum(ss.rho * K)
    return float((2 / math.pi) ** N * val.real)
