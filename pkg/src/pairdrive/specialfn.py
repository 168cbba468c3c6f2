"""Overflow-free complex series arithmetic.

Values that would overflow a double are carried as a pair
``(log_mag, phase)``.  The hypergeometric engine sums term-ratio
recursions in that representation, vectorised over blocks of terms.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import loggamma

__all__ = [
    "LogComplex",
    "SeriesResult",
    "SeriesError",
    "pochhammer",
    "log_pochhammer_seq",
    "hyper_pfq",
    "logsumexp_complex",
]

_TWO_PI = 2.0 * math.pi
INFLATION_FLAG = 1e6
MAX_TERMS = 2_000_000


class SeriesError(ArithmeticError):
    """Raised when a series cannot be evaluated to the requested tolerance."""


def _wrap(phase: float) -> float:
    p = math.fmod(phase, _TWO_PI)
    if p <= -math.pi:
        p += _TWO_PI
    elif p > math.pi:
        p -= _TWO_PI
    return p


@dataclass(frozen=True)
class LogComplex:
    """A complex number stored as natural-log magnitude and phase."""

    log_mag: float
    phase: float = 0.0

    def __post_init__(self):
        if self.log_mag == -math.inf:
            object.__setattr__(self, "phase", 0.0)
        else:
            object.__setattr__(self, "phase", _wrap(float(self.phase)))

    @classmethod
    def from_complex(cls, z: complex) -> "LogComplex":
        z = complex(z)
        if z == 0:
            return cls(-math.inf, 0.0)
        return cls(math.log(abs(z)), cmath.phase(z))

    @classmethod
    def from_log(cls, w: complex) -> "LogComplex":
        """Build from a complex logarithm ``w`` (value ``exp(w)``)."""
        w = complex(w)
        return cls(w.real, w.imag)

    @classmethod
    def zero(cls) -> "LogComplex":
        return cls(-math.inf, 0.0)

    @classmethod
    def one(cls) -> "LogComplex":
        return cls(0.0, 0.0)

    @property
    def is_zero(self) -> bool:
        return self.log_mag == -math.inf

    def to_complex(self) -> complex:
        if self.is_zero:
            return 0j
        return cmath.rect(math.exp(self.log_mag), self.phase)

    def __complex__(self) -> complex:
        return self.to_complex()

    def log(self) -> complex:
        return complex(self.log_mag, self.phase)

    def __mul__(self, other) -> "LogComplex":
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        if self.is_zero or other.is_zero:
            return LogComplex.zero()
        return LogComplex(self.log_mag + other.log_mag, self.phase + other.phase)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "LogComplex":
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        if other.is_zero:
            raise ZeroDivisionError("division by LogComplex zero")
        if self.is_zero:
            return LogComplex.zero()
        return LogComplex(self.log_mag - other.log_mag, self.phase - other.phase)

    def __add__(self, other) -> "LogComplex":
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        big, small = (self, other) if self.log_mag >= other.log_mag else (other, self)
        rel = cmath.rect(math.exp(small.log_mag - big.log_mag), small.phase - big.phase)
        s = 1.0 + rel
        if s == 0:
            return LogComplex.zero()
        return LogComplex(big.log_mag + math.log(abs(s)), big.phase + cmath.phase(s))

    __radd__ = __add__

    def __neg__(self) -> "LogComplex":
        if self.is_zero:
            return self
        return LogComplex(self.log_mag, self.phase + math.pi)

    def __sub__(self, other) -> "LogComplex":
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        return self + (-other)

    def __pow__(self, k: int) -> "LogComplex":
        if self.is_zero:
            return LogComplex.one() if k == 0 else LogComplex.zero()
        return LogComplex(k * self.log_mag, k * self.phase)

    def conj(self) -> "LogComplex":
        return LogComplex(self.log_mag, -self.phase)

    def __abs__(self) -> float:
        return 0.0 if self.is_zero else math.exp(self.log_mag)


@dataclass(frozen=True)
class SeriesResult:
    value: LogComplex
    terms_used: int
    tail_bound: float
    inflation: float = 1.0
    flagged: bool = False


def _is_nonpos_int(a: complex) -> bool:
    a = complex(a)
    return a.imag == 0 and a.real <= 0 and float(a.real).is_integer()


def pochhammer(a: complex, m: int) -> LogComplex:
    """Rising factorial (a)_m as a LogComplex."""
    if m < 0:
        raise ValueError("m must be non-negative")
    a = complex(a)
    if m == 0:
        return LogComplex.one()
    if _is_nonpos_int(a) and m > -a.real:
        return LogComplex.zero()
    if m <= 32 or _is_nonpos_int(a) or _is_nonpos_int(a + m):
        acc = 0j
        for j in range(m):
            acc += cmath.log(a + j)
        return LogComplex.from_log(acc)
    # gamma-ratio path; branch differences only shift the phase by 2*pi*k
    return LogComplex.from_log(complex(loggamma(a + m) - loggamma(a)))


def log_pochhammer_seq(a: complex, L: int) -> np.ndarray:
    """Complex logs of (a)_l for l = 0..L-1 (phases unwrapped).

    Entries after a zero factor are ``-inf``.
    """
    a = complex(a)
    out = np.zeros(L, dtype=complex)
    if L <= 1:
        return out
    fac = a + np.arange(L - 1)
    with np.errstate(divide="ignore"):
        lg = np.log(fac.astype(complex))
    out[1:] = np.cumsum(lg)
    return out


def logsumexp_complex(logs: np.ndarray) -> LogComplex:
    """Sum of ``exp(logs)`` for complex ``logs`` returned as LogComplex."""
    logs = np.asarray(logs, dtype=complex)
    re = logs.real
    if logs.size == 0 or not np.isfinite(re).any():
        return LogComplex.zero()
    mx = re[np.isfinite(re)].max()
    with np.errstate(invalid="ignore"):
        s = np.exp(logs - mx)
    s = s[np.isfinite(re)].sum()
    if s == 0:
        return LogComplex.zero()
    return LogComplex(mx + math.log(abs(s)), cmath.phase(s))


def _log_ratios(a, b, z_log, l):
    """log of the ratio t_{l+1}/t_l for a vector of indices l."""
    r = z_log - np.log(l + 1.0)
    # a zero numerator terminates the series; log(0) = -inf is the intended value
    with np.errstate(divide="ignore"):
        for ai in a:
            r = r + np.log((ai + l).astype(complex))
    for bi in b:
        r = r - np.log((bi + l).astype(complex))
    return r


def hyper_pfq(
    a,
    b,
    z: complex,
    tol: float = 1e-12,
    max_terms: Optional[int] = None,
    derivative: int = 0,
) -> SeriesResult:
    """Generalised hypergeometric series pFq(a; b; z) in log arithmetic.

    Terms are generated from the ratio recursion in blocks.  Summation
    stops once three consecutive terms are all below ``tol`` times the
    running maximum of the partial-sum magnitude, after the term ratio
    has dropped below one and past every negative-real denominator
    parameter.

    ``derivative=k`` applies ``(2 z d/dz)^k``, i.e. weights term ``l``
    by ``(2l)^k``.
    """
    if max_terms is None:
        max_terms = MAX_TERMS
    a = [complex(x) for x in a]
    b = [complex(x) for x in b]
    for bi in b:
        if _is_nonpos_int(bi):
            raise SeriesError(f"denominator parameter {bi} is a non-positive integer")
    if len(a) > len(b) + 1:
        raise SeriesError("divergent series: p > q + 1")
    z = complex(z)
    if derivative < 0:
        raise ValueError("derivative order must be non-negative")
    if z == 0:
        return SeriesResult(LogComplex.one() if derivative == 0 else LogComplex.zero(), 1, 0.0)
    # a terminating numerator parameter truncates the series exactly
    term_cap = max_terms
    for ai in a:
        if _is_nonpos_int(ai):
            term_cap = min(term_cap, int(-ai.real) + 1)
    z_log = cmath.log(z)
    l_min = max([0.0] + [-bi.real for bi in b]) + 1.0

    logs_all = []
    ratios_last = None
    start = 0
    cur = 0j  # log of current term t_start
    block = 256
    run_max = -math.inf
    psum = 0j
    scale = None  # log scale of psum
    n_small = 0
    done = False
    while not done:
        stop = min(start + block, term_cap)
        if stop <= start:
            break
        l = np.arange(start, stop, dtype=float)
        lr = _log_ratios(a, b, z_log, l)
        logs = np.empty(stop - start, dtype=complex)
        logs[0] = cur
        if stop - start > 1:
            logs[1:] = cur + np.cumsum(lr[:-1])
        cur = logs[-1] + lr[-1]
        if derivative:
            with np.errstate(divide="ignore"):
                logs = logs + derivative * np.log(2.0 * l)
        # running partial sums in a common scale
        re = logs.real
        bmax = re[np.isfinite(re)].max() if np.isfinite(re).any() else -math.inf
        if scale is None or (np.isfinite(bmax) and bmax > scale):
            new_scale = bmax if scale is None else bmax
            if scale is not None and np.isfinite(scale):
                psum = psum * math.exp(scale - new_scale)
            scale = new_scale
        with np.errstate(invalid="ignore", over="ignore"):
            tv = np.exp(logs - scale) if np.isfinite(scale) else np.zeros_like(logs)
        tv[~np.isfinite(re)] = 0
        cs = psum + np.cumsum(tv)
        psum = cs[-1]
        with np.errstate(divide="ignore"):
            ps_log = np.log(np.abs(cs)) + scale
        ps_run = np.maximum.accumulate(np.maximum(ps_log, run_max))
        small = re < ps_run + math.log(tol)
        mag_ratio = lr.real
        for i in range(stop - start):
            li = start + i
            if small[i] and li >= l_min and mag_ratio[i] < 0:
                n_small += 1
            else:
                n_small = 0
            if n_small >= 3:
                logs = logs[: i + 1]
                ratios_last = lr[i]
                done = True
                break
        run_max = ps_run[len(logs) - 1]
        logs_all.append(logs)
        if not done:
            ratios_last = lr[-1]
            start = stop
            if start >= term_cap:
                done = True
                if term_cap == max_terms:
                    raise SeriesError(f"max_terms={max_terms} exceeded")
    logs = np.concatenate(logs_all)
    value = logsumexp_complex(logs)
    terms_used = len(logs)
    if terms_used >= term_cap and term_cap < max_terms:
        tail = 0.0
    else:
        r = math.exp(ratios_last.real) if ratios_last is not None else 0.0
        last = logs[-1].real
        if value.is_zero:
            tail = math.inf
        elif r < 1:
            tail = math.exp(last - value.log_mag) * r / (1 - r)
        else:
            tail = math.inf
    re = logs.real
    fin = np.isfinite(re)
    max_term = re[fin].max() if fin.any() else -math.inf
    inflation = math.exp(max_term - value.log_mag) if not value.is_zero else math.inf
    inflation = max(1.0, inflation)
    return SeriesResult(
        value=value,
        terms_used=terms_used,
        tail_bound=tail * inflation,
        inflation=inflation,
        flagged=inflation > INFLATION_FLAG,
    )
