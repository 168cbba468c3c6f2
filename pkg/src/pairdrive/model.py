"""Model definition, pair-driving matrix and its Takagi factorization."""

from __future__ import annotations

import csv
import itertools
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "ModelSpec",
    "DerivedScalars",
    "PairingSpectrum",
    "build_pairing_matrix",
    "takagi",
    "spectrum_of",
    "singular_value_formula",
    "brillouin_zone",
    "load_config",
    "load_matrix_csv",
    "DEGENERACY_RTOL",
]

DEGENERACY_RTOL = 1e-10


@dataclass(frozen=True)
class ModelSpec:
    """Physical parameters of the driven lattice.

    Energies are in arbitrary but common units (the CLI uses ``U = 1``).
    """

    N: int
    D: int = 0
    dims: tuple = ()
    boundary: str = "periodic"
    U: float = 1.0
    Delta: float = 0.0
    kappa: float = 0.0
    G: complex = 0.0
    Lam: complex = 0.0
    M_override: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "G", complex(self.G))
        object.__setattr__(self, "Lam", complex(self.Lam))
        if self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.D < 0:
            raise ValueError("D must be non-negative")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.U == 0:
            raise ValueError("U must be nonzero")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.dims:
            if len(self.dims) != self.D:
                raise ValueError("len(dims) must equal D")
            if math.prod(self.dims) != self.N:
                raise ValueError("product of dims must equal N")
        if self.M_override is not None:
            M = np.asarray(self.M_override, dtype=complex)
            if M.shape != (self.N, self.N):
                raise ValueError("M_override must be N x N")
            scale = max(1.0, float(np.abs(M).max()))
            if np.abs(M - M.T).max() > 1e-14 * scale:
                raise ValueError("M_override must be symmetric")
            object.__setattr__(self, "M_override", M)

    def with_(self, **kw) -> "ModelSpec":
        return replace(self, **kw)

    @property
    def derived(self) -> "DerivedScalars":
        return DerivedScalars.of(self)


@dataclass(frozen=True)
class DerivedScalars:
    u: float
    Delta_eff: complex
    delta: complex

    @classmethod
    def of(cls, spec: ModelSpec) -> "DerivedScalars":
        u = spec.U / spec.N
        de = complex(spec.Delta, spec.kappa / 2)
        return cls(u=u, Delta_eff=de, delta=1 - de / (2 * u))


@dataclass(frozen=True)
class PairingSpectrum:
    """Takagi data of ``M/u``: ``M/u = V diag(lam) V^T``."""

    V: np.ndarray
    lam: np.ndarray
    classes: tuple
    lam_star: float
    s: int

    @property
    def N(self) -> int:
        return len(self.lam)

    @property
    def is_unitary(self) -> bool:
        return len(self.classes) == 1

    def class_of(self, j: int) -> int:
        for c, members in enumerate(self.classes):
            if j in members:
                return c
        raise IndexError(j)

    def matrix(self) -> np.ndarray:
        return (self.V * self.lam) @ self.V.T


def _neighbours(dims, boundary):
    """Yield unordered nearest-neighbour site pairs on a hypercubic grid."""
    seen = set()
    for idx in itertools.product(*[range(L) for L in dims]):
        i = np.ravel_multi_index(idx, dims)
        for ax, L in enumerate(dims):
            nb = list(idx)
            nb[ax] += 1
            if nb[ax] == L:
                if boundary != "periodic":
                    continue
                nb[ax] = 0
            j = np.ravel_multi_index(tuple(nb), dims)
            if i == j:
                continue
            key = (min(i, j), max(i, j))
            if key not in seen:
                seen.add(key)
                yield key


def build_pairing_matrix(spec: ModelSpec) -> np.ndarray:
    if spec.M_override is not None:
        return spec.M_override.copy()
    N = spec.N
    if spec.D == 0:
        if spec.Lam != 0:
            raise ValueError("nearest-neighbour drive requires D > 0")
        return spec.G * np.eye(N, dtype=complex)
    if not spec.dims:
        raise ValueError("D > 0 requires dims")
    M = spec.G * np.eye(N, dtype=complex)
    t = spec.Lam / (2 * spec.D)
    for i, j in _neighbours(spec.dims, spec.boundary):
        M[i, j] = M[j, i] = t
    return M


def _classes(lam: np.ndarray, rtol: float) -> tuple:
    if len(lam) == 0:
        return ()
    tol = rtol * max(1.0, float(lam[0]))
    groups = [[0]]
    for j in range(1, len(lam)):
        if abs(lam[groups[-1][0]] - lam[j]) <= tol:
            groups[-1].append(j)
        else:
            groups.append([j])
    return tuple(tuple(g) for g in groups)


def takagi(M: np.ndarray, u: float = 1.0, rtol: float = DEGENERACY_RTOL) -> PairingSpectrum:
    """Takagi factorization ``M/u = V diag(lam) V^T`` with ``lam`` descending."""
    A = np.asarray(M, dtype=complex) / u
    n = A.shape[0]
    scale = max(1.0, float(np.abs(A).max()) if A.size else 1.0)
    if A.shape != (n, n) or np.abs(A - A.T).max(initial=0.0) > 1e-12 * scale:
        raise ValueError("Takagi factorization needs a symmetric matrix")
    A = 0.5 * (A + A.T)
    if np.abs(A.imag).max(initial=0.0) == 0.0:
        d, Q = np.linalg.eigh(A.real)
        lam = np.abs(d)
        phase = np.where(d < 0, 1j, 1.0)
        V = Q * phase
    else:
        B, C = A.real, A.imag
        big = np.block([[B, C], [C, -B]])
        w, X = np.linalg.eigh(big)
        cut = 1e-13 * scale * n
        pos = np.where(w > cut)[0]
        lam_pos = w[pos]
        Vp = X[:n, pos] + 1j * X[n:, pos]
        nz = n - len(pos)
        if nz:
            _, _, Wh = np.linalg.svd(A)
            # rows of Wh span null(A) up to conjugation: A @ Wh[k].conj() = 0,
            # so Wh[k] itself satisfies A @ conj(v) = 0
            Vz = Wh[n - nz:].T
            V = np.concatenate([Vp, Vz], axis=1)
            lam = np.concatenate([lam_pos, np.zeros(nz)])
        else:
            V, lam = Vp, lam_pos
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    V = V[:, order]
    classes = _classes(lam, rtol)
    # inside a degeneracy class, order columns by their dominant site
    perm = []
    for members in classes:
        idx = np.array(members)
        key = np.argmax(np.abs(V[:, idx]) > np.abs(V[:, idx]).max(axis=0) - 1e-9, axis=0)
        perm.extend(idx[np.argsort(key, kind="stable")])
    V = V[:, perm]
    lam = lam[perm]
    lam_star = float(lam.max()) if n else 0.0
    return PairingSpectrum(V=V, lam=lam, classes=classes, lam_star=lam_star, s=len(classes[0]))


def spectrum_of(spec: ModelSpec) -> PairingSpectrum:
    return takagi(build_pairing_matrix(spec), spec.U / spec.N)


def singular_value_formula(spec: ModelSpec, k: Sequence[float]) -> float:
    """Closed-form singular value of ``M/u`` at lattice momentum ``k``."""
    if spec.D < 1:
        raise ValueError("momentum formula needs D >= 1")
    if spec.boundary != "periodic":
        raise ValueError("momentum formula only holds for periodic boundaries")
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if k.shape != (spec.D,):
        raise ValueError("k must have D components")
    u = spec.U / spec.N
    return float(abs(spec.Lam / spec.D * np.cos(k).sum() + spec.G) / abs(u))


def brillouin_zone(dims: Sequence[int]):
    """All lattice momenta of a periodic grid, as D-tuples."""
    axes = [2 * np.pi * np.arange(L) / L for L in dims]
    return [tuple(p) for p in itertools.product(*axes)]


def load_matrix_csv(path, N: Optional[int] = None) -> np.ndarray:
    """Read an N-row CSV with real/imag parts interleaved across 2N columns."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            row = [x.strip() for x in row if x.strip()]
            if not row or row[0].startswith("#"):
                continue
            vals = np.array([float(x) for x in row])
            rows.append(vals[0::2] + 1j * vals[1::2])
    M = np.array(rows, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{path}: expected N rows of 2N numbers")
    if N is not None and M.shape[0] != N:
        raise ValueError(f"{path}: matrix size {M.shape[0]} does not match n={N}")
    return M


def spec_from_mapping(cfg: dict, base_dir: Path | None = None) -> ModelSpec:
    n = int(cfg["n"])
    d = int(cfg.get("d", 0))
    dims = tuple(cfg.get("dims", ()))
    if d > 0 and not dims:
        L = round(n ** (1.0 / d))
        if L ** d != n:
            raise ValueError("dims missing and n is not a perfect power of d")
        dims = (L,) * d
    M = None
    if cfg.get("matrix"):
        p = Path(cfg["matrix"])
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        M = load_matrix_csv(p, n)
    return ModelSpec(
        N=n,
        D=d,
        dims=dims,
        boundary=cfg.get("boundary", "periodic"),
        U=float(cfg.get("big_u", 1.0)),
        Delta=float(cfg.get("delta", 0.0)),
        kappa=float(cfg.get("kappa", 0.0)),
        G=complex(cfg.get("g_re", 0.0), cfg.get("g_im", 0.0)),
        Lam=complex(cfg.get("lambda_re", 0.0), cfg.get("lambda_im", 0.0)),
        M_override=M,
    )


def load_config(path) -> ModelSpec:
    path = Path(path)
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    if "model" in cfg and isinstance(cfg["model"], dict):
        cfg = cfg["model"]
    return spec_from_mapping(cfg, path.parent)
