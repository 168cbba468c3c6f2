"""Equivalence checks between the closed-form pipeline and the Fock oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .model import ModelSpec, spectrum_of
from .moments import _displaced_pairs, correlators, default_displacements
from .oracle import (
    FockConfig,
    OracleError,
    auto_fock,
    hopping_invariance,
    htrs_residual,
    imaginary_hopping,
    nonthermality,
    oracle_wigner,
    purification_state,
    steady_state,
)
from .wigner import wigner_at

__all__ = ["CheckResult", "random_spec", "draw_suite", "oracle_suite", "compare_observables", "full_suite"]

DRAW_SHAPES = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1))


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} (tol {self.tol:.1e}) {self.detail}".rstrip()


def random_spec(rng: np.random.Generator, N: int, D: int, U: float = 1.0) -> ModelSpec:
    """Loss in [0.01U, U], drives with modulus at most U, detuning in [-2U, 2U]."""

    def amp():
        return U * math.sqrt(rng.uniform()) * complex(math.cos(t := rng.uniform(0, 2 * math.pi)), math.sin(t))

    kappa = rng.uniform(0.01, 1.0) * U
    G = amp()
    Lam = amp() if D else 0j
    Delta = rng.uniform(-2.0, 2.0) * U
    dims = (N,) if D else ()
    return ModelSpec(N=N, D=D, dims=dims, U=U, Delta=Delta, kappa=kappa, G=G, Lam=Lam)


def draw_suite(seed: int, draws: int, shapes=DRAW_SHAPES) -> List[ModelSpec]:
    """Seeded draws cycling through the (N, D) shapes."""
    rng = np.random.default_rng(seed)
    return [random_spec(rng, *shapes[i % len(shapes)]) for i in range(draws)]


def oracle_suite(seed: int, draws: int, check=None, shapes=DRAW_SHAPES, max_replacements: int = 20):
    """Run ``check`` over seeded draws.

    A draw whose oracle solve rejects its own Fock cutoff lies outside the
    reach of the reference solver; it is replaced by the next draw of the
    same shape from the same random stream.  Returns (specs, results,
    number of replacements).
    """
    check = check or compare_observables
    rng = np.random.default_rng(seed)
    specs, results, replaced = [], [], 0
    for i in range(draws):
        shape = shapes[i % len(shapes)]
        while True:
            spec = random_spec(rng, *shape)
            try:
                results.append(check(spec))
                specs.append(spec)
                break
            except OracleError:
                replaced += 1
                if replaced > max_replacements:
                    raise
    return specs, results, replaced


def _oracle_for(spec: ModelSpec, nbar: float, max_dim: int = 1400, grow: bool = False):
    """Steady state, optionally retrying with larger cutoffs when the shell is populated."""
    last = None
    caps = (max_dim, 2 * max_dim, 4096) if grow else (max_dim,)
    for cap in caps:
        fock = auto_fock(spec.N, nbar, max_dim=cap)
        if last is not None and fock == last:
            continue
        last = fock
        try:
            return steady_state(spec, fock)
        except OracleError as exc:
            err = exc
    raise err


def compare_observables(
    spec: ModelSpec, tol_floor: float = 1e-7, tol: float = 1e-12, ss=None, max_dim: int = 1400
) -> List[CheckResult]:
    """nbar, displaced correlators and g2 against the oracle."""
    spectrum = spectrum_of(spec)
    delta = spec.derived.delta
    rs = default_displacements(spec)
    obs = correlators(spec, spectrum, delta, rs, tol=tol)
    if ss is None:
        ss = _oracle_for(spec, obs.nbar, max_dim)
    ref = ss.site_correlations()
    etol = max(tol_floor, ss.truncation_error)
    out = []
    nbar_o = float(ref["n"].mean())
    # scale by the density so large states are compared relative to their size
    scale = max(1.0, obs.nbar)
    d = abs(obs.nbar - nbar_o)
    out.append(CheckResult("nbar", d, etol * scale, d <= etol * scale))
    worst = {"one": 0.0, "pairing": 0.0, "g2": 0.0}
    for r in obs.one_particle:
        pr = _displaced_pairs(spec, r)
        I, K = np.array(pr).T
        one_o = ref["one"][I, K].mean()
        pair_o = ref["pairing"][I, K].mean()
        worst["one"] = max(worst["one"], abs(obs.one_particle[r] - one_o))
        worst["pairing"] = max(worst["pairing"], abs(obs.pairing[r] - pair_o))
        if r in obs.g2 and nbar_o > 0:
            g2_o = float(((ref["nn"][I, K] - nbar_o ** 2) / nbar_o ** 2).mean())
            # g2 carries 1/nbar^2; compare the unnormalised density correlator
            worst["g2"] = max(worst["g2"], abs(obs.g2[r] - g2_o) * obs.nbar ** 2)
    for key, name in (("one", "one-particle"), ("pairing", "pairing"), ("g2", "density-density")):
        s = scale if key != "g2" else scale ** 2
        out.append(CheckResult(name, worst[key], etol * s, worst[key] <= etol * s))
    return out


def full_suite(spec: ModelSpec, tol: float = 1e-12, with_wigner: bool = True, max_dim: int = 1400) -> List[CheckResult]:
    """Observables plus Wigner, hTRS, hopping and nonthermality checks where they apply."""
    spectrum = spectrum_of(spec)
    delta = spec.derived.delta
    obs = correlators(spec, spectrum, delta, [0], tol=tol)
    ss = _oracle_for(spec, obs.nbar, max_dim)
    res = compare_observables(spec, tol=tol, ss=ss)
    if with_wigner:
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(3):
            a = 0.6 * (rng.normal(size=spec.N) + 1j * rng.normal(size=spec.N))
            worst = max(worst, abs(wigner_at(spec, spectrum, delta, a, tol) - oracle_wigner(ss, a)))
        res.append(CheckResult("wigner", worst, 1e-6, worst <= 1e-6))
    if spec.N <= 2 and obs.nbar < 1.5:
        T = 12 if spec.N == 2 else 30
        fock2 = FockConfig(2 * spec.N, T, T)
        try:
            psi = purification_state(spec, fock2)
            h = htrs_residual(spec, psi, fock2)
            res.append(CheckResult("hTRS", h, 1e-8, h <= 1e-8))
        except OracleError as exc:
            res.append(CheckResult("hTRS", math.nan, 1e-8, True, f"skipped: {exc}"))
    if spec.D == 0 and spec.N >= 2:
        t = np.zeros((spec.N, spec.N))
        t[0, 1] = 0.3 * spec.U
        h = imaginary_hopping(t)
        dist = hopping_invariance(spec, ss.fock, h)
        res.append(CheckResult("hopping", dist, 1e-8, dist <= 1e-8))
    nt = nonthermality(spec, ss.fock, ss)
    res.append(CheckResult("nonthermality", nt, 1e-6, nt > 1e-6, "(must exceed)"))
    return res
