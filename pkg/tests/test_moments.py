import math

import numpy as np
import pytest

from pairdrive.model import ModelSpec, spectrum_of, takagi
from pairdrive.moments import (
    Convention,
    PurificationCoefficients,
    ResonanceError,
    collective_moment_general,
    collective_moment_unitary,
    correlators,
    local_moment_general,
    mean_density,
    mode_moments,
    normal_moment,
    pcs_residual,
)
from pairdrive.oracle import FockConfig, steady_state


def test_coefficient_conventions():
    d = 0.3 - 0.7j
    for m in range(6):
        a = PurificationCoefficients(d, Convention.EXPLICIT_FACTORIAL).coefficient(m).to_complex()
        b = PurificationCoefficients(d, Convention.ABSORBED_FACTORIAL).coefficient(m).to_complex()
        assert b == pytest.approx(a / math.factorial(m), rel=1e-13)
    assert PurificationCoefficients(d).coefficient(0).to_complex() == 1


def test_resonance_guard():
    with pytest.raises(ResonanceError):
        collective_moment_unitary(0, 1, 0, 1.0, 2, -3.0)
    with pytest.raises(ResonanceError):
        correlators(ModelSpec(N=2, G=0.1, Delta=4.0 * 1.0 / 2 * 2), spectrum_of(ModelSpec(N=2, G=0.1)), -3.0)


def test_unitary_trivial_values():
    d = 0.4 - 0.2j
    assert collective_moment_unitary(0, 0, 0, 3.0, 4, d) == pytest.approx(1)
    assert collective_moment_unitary(1, 0, 0, 0.0, 4, d) == 0
    assert collective_moment_unitary(0, 2, 0, 0.0, 4, d) == 0


def test_unitary_density_vs_oracle():
    N, U, G, kappa = 1, 1.0, 0.1, 0.01
    s = ModelSpec(N=N, U=U, G=G, kappa=kappa)
    lam = G * N / U
    two_n = collective_moment_unitary(0, 1, 0, lam, N, s.derived.delta).real
    ss = steady_state(s, FockConfig(1, 40, 40))
    assert two_n / 2 == pytest.approx(ss.site_correlations()["n"][0], abs=1e-8)


@pytest.mark.parametrize("lam", [0.3, 5.0, 50.0])
def test_unitary_vs_general(lam):
    N = 3
    sp = takagi(np.eye(N) * lam)
    d = 1.3 - 0.4j
    for n in range(4):
        for k in range(3):
            for m in range(4):
                a = collective_moment_unitary(n, k, m, lam, N, d)
                b = collective_moment_general(n, k, m, sp, d)
                assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_general_all_zero_spectrum():
    sp = takagi(np.zeros((2, 2)))
    d = 0.5 - 0.1j
    assert collective_moment_general(0, 0, 0, sp, d) == pytest.approx(1)
    assert collective_moment_general(0, 1, 0, sp, d) == 0


def test_general_density_vs_oracle():
    # N=2 with singular values (2, 1) and delta = 3 - 0.5i
    u = 1.0 / 2
    s = ModelSpec(N=2, U=1.0, Delta=-2.0, kappa=1.0, M_override=np.diag([2 * u, u]))
    assert s.derived.delta == pytest.approx(3 - 0.5j)
    sp = spectrum_of(s)
    two_n = collective_moment_general(0, 1, 0, sp, s.derived.delta).real
    ss = steady_state(s, FockConfig(2, 25, 25))
    assert two_n / 2 == pytest.approx(ss.site_correlations()["n"].sum(), abs=1e-8)


def test_local_moment_basics():
    sp = takagi(np.diag([2.0, 1.0]))
    d = 3 - 0.5j
    assert local_moment_general((0, 0), (0, 0), (0, 0), sp, d) == pytest.approx(1)
    assert normal_moment((1, 0), (0, 0), sp, d) == 0
    assert normal_moment((2, 1), (1, 0), sp, d) == 0


def test_local_occupation_vs_oracle():
    u = 0.5
    s = ModelSpec(N=2, U=1.0, Delta=0.3, kappa=0.4, M_override=np.diag([2 * u * 0.4, u * 0.2]))
    sp = spectrum_of(s)
    occ = local_moment_general((0, 0), (0, 0), (1, 0), sp, s.derived.delta).real
    ss = steady_state(s, FockConfig(2, 30, 30))
    j = int(np.argmax(np.abs(sp.V[:, 0])))
    assert occ == pytest.approx(ss.site_correlations()["n"][j], abs=1e-8)


def test_vacuum_correlators():
    s = ModelSpec(N=4, D=1, dims=(4,), kappa=0.1)
    obs = correlators(s, spectrum_of(s), s.derived.delta)
    assert obs.nbar == 0
    assert all(v == 0 for v in obs.one_particle.values())


def test_onsite_drive_has_no_hopping_coherence():
    s = ModelSpec(N=4, G=0.3, kappa=0.1, Delta=0.2)
    obs = correlators(s, spectrum_of(s), s.derived.delta, [0, 1, 2])
    assert abs(obs.one_particle[1]) < 1e-14 and abs(obs.one_particle[2]) < 1e-14
    assert obs.one_particle[0] == pytest.approx(obs.nbar)


def test_open_chain_vs_oracle():
    s = ModelSpec(N=2, D=1, dims=(2,), boundary="open", U=1.0, G=0.2, Lam=0.25, kappa=0.01)
    obs = correlators(s, spectrum_of(s), s.derived.delta, [0, 1])
    ref = steady_state(s, FockConfig(2, 30, 30)).site_correlations()
    assert obs.nbar == pytest.approx(ref["n"].mean(), abs=1e-7)
    assert obs.one_particle[1] == pytest.approx(ref["one"][0, 1], abs=1e-7)
    assert obs.pairing[1] == pytest.approx(ref["pairing"][0, 1], abs=1e-7)
    assert obs.pairing[0] == pytest.approx(ref["pairing"].diagonal().mean(), abs=1e-7)
    g2 = (ref["nn"][0, 1] - ref["n"].mean() ** 2) / ref["n"].mean() ** 2
    assert obs.g2[1] == pytest.approx(g2, abs=1e-7)


def test_ring_invariants():
    s = ModelSpec(N=7, D=1, dims=(7,), G=0.3 + 0.1j, Lam=0.6, kappa=0.2, Delta=0.5)
    obs = correlators(s, spectrum_of(s), s.derived.delta, range(-3, 4))
    assert obs.nbar >= 0
    assert all(v >= -1 for v in obs.g2.values())
    for r in range(1, 4):
        assert obs.one_particle[-r] == pytest.approx(np.conj(obs.one_particle[r]), abs=1e-12)


def test_routes_agree():
    sp = takagi(np.eye(4) * 3.0)
    d = -0.7 - 0.3j
    a = mode_moments(sp, d, 4, route="unitary")
    b = mode_moments(sp, d, 4, route="general")
    for x, y in ((a.occ, b.occ), (a.pair, b.pair), (a.P, b.P), (a.Q, b.Q)):
        assert np.allclose(x, y, rtol=1e-10, atol=1e-13)


def test_mean_density_matches_correlators():
    s = ModelSpec(N=9, D=2, dims=(3, 3), G=0.2, Lam=0.25, kappa=0.05, Delta=0.4)
    sp = spectrum_of(s)
    assert mean_density(sp, s.derived.delta) == pytest.approx(correlators(s, sp, s.derived.delta, [0]).nbar, rel=1e-12)


@pytest.mark.parametrize("N", [1, 6, 20])
def test_pcs_residual_at_half_n(N):
    s = ModelSpec(N=N, G=0.5)
    sp = spectrum_of(s)
    assert pcs_residual(s, sp, N / 2, 200) < 1e-10


def test_pcs_residual_generic():
    s = ModelSpec(N=2, G=0.5)
    assert pcs_residual(s, spectrum_of(s), 1 + 5, 200) > 0.1


def test_single_site_pcs_point():
    s = ModelSpec(N=1, U=1.0, Delta=1.0, kappa=0.0, G=0.4)
    assert s.derived.delta == pytest.approx(0.5)
    assert pcs_residual(s, spectrum_of(s), s.derived.delta, 200) < 1e-10
