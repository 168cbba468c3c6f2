"""Combinatorial form factors for the nonunitary pair-driven state.

Each table is the coefficient sequence of a product of per-mode power
series, so it is built by repeated truncated convolution.  All entries
are positive; they are stored as natural logs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .specialfn import LogComplex

__all__ = [
    "FormFactorTable",
    "phi_plain",
    "phi_general",
    "log_convolve",
    "plain_mode_factor",
    "general_mode_factor",
]

_TINY = 1e-280


@dataclass(frozen=True)
class FormFactorTable:
    log_values: np.ndarray
    lam: tuple
    n_vec: tuple
    m_vec: tuple
    b_vec: tuple
    cutoff: int

    @property
    def values(self) -> list:
        return [LogComplex(float(x), 0.0) for x in self.log_values]

    def __getitem__(self, l: int) -> LogComplex:
        return LogComplex(float(self.log_values[l]), 0.0)

    def __len__(self) -> int:
        return len(self.log_values)


def _log_poch_real(a: float, k: int) -> np.ndarray:
    out = np.zeros(k + 1)
    out[1:] = np.cumsum(np.log(a + np.arange(k)))
    return out


def plain_mode_factor(lam: float, k: int) -> np.ndarray:
    """log[(1/2)_p lam^{2p}], p = 0..k."""
    p = np.arange(k + 1)
    out = _log_poch_real(0.5, k)
    if lam == 0:
        out[1:] = -np.inf
    else:
        out = out + 2 * p * np.log(lam)
    return out


def general_mode_factor(lam: float, n: int, m: int, b: int, k: int) -> np.ndarray:
    """log[(1/2+n+b)_p (1/2+m+b)_p (4 lam)^{2p} / (2p+b)!], p = 0..k."""
    p = np.arange(k + 1)
    out = _log_poch_real(0.5 + n + b, k) + _log_poch_real(0.5 + m + b, k) - gammaln(2 * p + b + 1)
    if lam == 0:
        out[1:] = -np.inf
    else:
        out = out + 2 * p * np.log(4 * lam)
    return out


def _exact_logconv(la: np.ndarray, lb: np.ndarray, ls: Sequence[int]) -> np.ndarray:
    out = np.empty(len(ls))
    for i, l in enumerate(ls):
        out[i] = logsumexp(la[: l + 1] + lb[l::-1])
    return out


def _last_finite(x: np.ndarray) -> int:
    idx = np.nonzero(np.isfinite(x))[0]
    return int(idx[-1]) if len(idx) else -1


def log_convolve(la: np.ndarray, lb: np.ndarray) -> np.ndarray:
    """Truncated convolution of two positive sequences given by their logs.

    Returns ``log c_l`` with ``c_l = sum_p a_p b_{l-p}`` for ``l < len(la)``.
    """
    K = len(la)
    ea, eb = _last_finite(la), _last_finite(lb)
    if ea == 0:
        return lb + la[0]
    if eb == 0:
        return la + lb[0]
    l = np.arange(K, dtype=float)
    # a common linear tilt keeps both sequences near unit scale
    sa = (la[ea] - la[0]) / ea
    sb = (lb[eb] - lb[0]) / eb
    s = 0.5 * (sa + sb)
    ta = la - s * l
    tb = lb - s * l
    ca = np.max(ta[np.isfinite(ta)])
    cb = np.max(tb[np.isfinite(tb)])
    with np.errstate(under="ignore"):
        A = np.exp(ta - ca)
        B = np.exp(tb - cb)
        C = np.convolve(A, B)[:K]
    with np.errstate(divide="ignore"):
        out = np.log(C) + ca + cb + s * l
    bad = np.nonzero(~(C > _TINY))[0]
    if len(bad):
        out[bad] = _exact_logconv(la, lb, bad)
    return out


def _power_convolve(f: np.ndarray, times: int) -> np.ndarray:
    """f convolved with itself ``times`` times (times >= 1)."""
    result = None
    base = f
    while times:
        if times & 1:
            result = base if result is None else log_convolve(result, base)
        times >>= 1
        if times:
            base = log_convolve(base, base)
    return result


def _build(factors: list, k: int) -> np.ndarray:
    """Convolve a list of (log factor table, multiplicity) pairs."""
    table = np.full(k + 1, -np.inf)
    table[0] = 0.0
    for f, mult in factors:
        table = log_convolve(table, _power_convolve(f, mult))
    return table


def _group(keys: list, tables_for_key) -> list:
    counts: dict = {}
    for key in keys:
        counts[key] = counts.get(key, 0) + 1
    return [(tables_for_key(key), c) for key, c in counts.items()]


def phi_plain(lam: Sequence[float], k: int) -> FormFactorTable:
    """Phi_l = sum over compositions of l of prod_j (1/2)_{k_j} lam_j^{2 k_j}."""
    lam = tuple(float(x) for x in lam)
    if k < 0:
        raise ValueError("cutoff must be non-negative")
    if any(x < 0 for x in lam):
        raise ValueError("singular values must be non-negative")
    factors = _group(list(lam), lambda x: plain_mode_factor(x, k))
    N = len(lam)
    return FormFactorTable(_build(factors, k), lam, (0,) * N, (0,) * N, (False,) * N, k)


def phi_general(lam, n_vec, m_vec, b_vec, k: int) -> FormFactorTable:
    """Generalised form factor with per-mode shifts n, m and parity bits b."""
    lam = tuple(float(x) for x in lam)
    n_vec = tuple(int(x) for x in n_vec)
    m_vec = tuple(int(x) for x in m_vec)
    b_vec = tuple(bool(x) for x in b_vec)
    if not (len(lam) == len(n_vec) == len(m_vec) == len(b_vec)):
        raise ValueError("lam, n_vec, m_vec and b_vec must have equal length")
    if k < 0:
        raise ValueError("cutoff must be non-negative")
    if any(x < 0 for x in lam) or any(x < 0 for x in n_vec + m_vec):
        raise ValueError("negative entries are not allowed")
    keys = [(lam[j], n_vec[j], m_vec[j], int(b_vec[j])) for j in range(len(lam))]
    factors = _group(keys, lambda key: general_mode_factor(key[0], key[1], key[2], key[3], k))
    return FormFactorTable(_build(factors, k), lam, n_vec, m_vec, b_vec, k)
