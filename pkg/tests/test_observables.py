import math

import numpy as np
import pytest

from spinmo.basis import (
    StateVector,
    build_full_basis,
    build_pair_basis,
    polar_state,
    twin_fock_state,
)
from spinmo.observables import (
    SpinMoments,
    conversion_efficiency,
    fidelity_singlet,
    fidelity_twinfock,
    occupied_levels,
    record_for,
    reference_eigensystem,
    singlet_amplitudes,
    spin_moments,
    squeezing_xi2,
)


def singlet_state(n):
    return StateVector(build_pair_basis(n), singlet_amplitudes(n).astype(complex))


def test_occupied_levels_singlet_is_one():
    n = 10
    ref = reference_eigensystem(n)
    assert occupied_levels(singlet_state(n), ref) == 1


def test_occupied_levels_equal_superposition_is_two():
    n = 10
    ref = reference_eigensystem(n)
    amp = (ref.vectors[:, 0] + ref.vectors[:, 2]) / math.sqrt(2)
    st = StateVector(build_pair_basis(n), amp.astype(complex))
    assert occupied_levels(st, ref) == 2


def test_occupied_levels_threshold_knob():
    n = 10
    ref = reference_eigensystem(n)
    amp = math.sqrt(0.995) * ref.vectors[:, 0] + math.sqrt(0.005) * ref.vectors[:, 1]
    st = StateVector(build_pair_basis(n), amp.astype(complex))
    assert occupied_levels(st, ref, threshold=1e-3) == 2
    assert occupied_levels(st, ref, threshold=1e-2) == 1


def test_occupied_levels_invariant_under_global_phase():
    n = 8
    ref = reference_eigensystem(n)
    st = singlet_state(n)
    rotated = StateVector(st.basis, st.amplitudes * np.exp(1j * 0.73))
    assert occupied_levels(rotated, ref) == occupied_levels(st, ref)


def test_xi2_singlet_zero():
    assert abs(squeezing_xi2(singlet_state(12))) < 1e-12


def test_xi2_odd_ground_is_2_over_n():
    n = 5
    eig = reference_eigensystem(n)
    st = StateVector(build_pair_basis(n), eig.ground().astype(complex))
    assert squeezing_xi2(st) == pytest.approx(2.0 / n, rel=1e-9)


def test_xi2_polar_is_two():
    for n in (4, 25, 1000):
        assert squeezing_xi2(polar_state(build_pair_basis(n))) == pytest.approx(2.0, rel=1e-12)


def test_xi2_coherent_spin_state_is_one():
    # fully +x polarized product state on the full basis
    n = 6
    basis = build_full_basis(n)
    c = {1: 0.5, 0: 1 / math.sqrt(2), -1: 0.5}  # +x eigenvector of the spin-1 matrix
    amps = np.zeros(basis.size, dtype=complex)
    for i, (nm, n0, npl) in enumerate(basis.states):
        amps[i] = (
            math.sqrt(math.factorial(n) / (math.factorial(nm) * math.factorial(n0) * math.factorial(npl)))
            * c[-1] ** nm
            * c[0] ** n0
            * c[1] ** npl
        )
    st = StateVector(basis, amps)
    assert abs(st.norm - 1) < 1e-12
    assert squeezing_xi2(st) == pytest.approx(1.0, rel=1e-10)
    m = spin_moments(st)
    assert m.lx == pytest.approx(n, rel=1e-12)


def test_xi2_cross_path_sector_vs_full():
    # embed a pair-sector state into the full basis; the generic moment
    # path must reproduce the chain formula to 1e-10
    n = 8
    rng = np.random.default_rng(5)
    pair = build_pair_basis(n)
    amps = rng.normal(size=pair.size) + 1j * rng.normal(size=pair.size)
    amps /= np.linalg.norm(amps)
    st_pair = StateVector(pair, amps)
    full = build_full_basis(n)
    big = np.zeros(full.size, dtype=complex)
    big[full.block(0)] = amps
    st_full = StateVector(full, big)
    assert abs(squeezing_xi2(st_pair) - squeezing_xi2(st_full)) < 1e-10


def test_fidelity_singlet_examples():
    assert fidelity_singlet(singlet_state(8)) == pytest.approx(1.0, abs=1e-12)
    # N=2: polar overlap with the total-spin-zero state is 1/3
    assert fidelity_singlet(polar_state(build_pair_basis(2))) == pytest.approx(1 / 3, rel=1e-12)
    assert fidelity_singlet(polar_state(build_pair_basis(5))) == 0.0  # odd N


def test_fidelity_twinfock_examples():
    tf = twin_fock_state(build_pair_basis(6))
    assert fidelity_twinfock(tf) == 1.0
    assert fidelity_twinfock(singlet_state(2)) == pytest.approx(2 / 3, rel=1e-12)


def test_singlet_completeness():
    n = 12
    ref = reference_eigensystem(n)
    rng = np.random.default_rng(11)
    amps = rng.normal(size=n // 2 + 1) + 1j * rng.normal(size=n // 2 + 1)
    amps /= np.linalg.norm(amps)
    st = StateVector(build_pair_basis(n), amps)
    pops = ref.populations(st.amplitudes)
    assert abs(fidelity_singlet(st) + pops[1:].sum() - 1.0) < 1e-10


def test_conversion_efficiency_examples():
    assert conversion_efficiency(polar_state(build_pair_basis(6))) == 0.0
    assert conversion_efficiency(twin_fock_state(build_pair_basis(6))) == 1.0
    assert conversion_efficiency(singlet_state(2)) == pytest.approx(2 / 3, rel=1e-12)


def test_n2_singlet_structure():
    # frozen expansion: (sqrt(2)|k=1> - |k=0>)/sqrt(3) up to global sign
    vec = singlet_amplitudes(2)
    assert abs(abs(vec[0]) - 1 / math.sqrt(3)) < 1e-12
    assert abs(abs(vec[1]) - math.sqrt(2 / 3)) < 1e-12


def test_record_for_fields():
    n = 6
    st = polar_state(build_pair_basis(n))
    r = record_for(st, 0.5, 277.0)
    ref = reference_eigensystem(n)
    pops = ref.populations(st.amplitudes)
    assert r.K == int((pops > 1e-3).sum())  # polar spreads over every even-l level at N=6
    assert r.pc == 0.0 and r.n_current == n and abs(r.norm - 1) < 1e-12
    assert 0 <= r.F_singlet <= 1 and r.xi2 == pytest.approx(2.0)


def test_spin_moments_average():
    a = SpinMoments(0, 0, 1, 2, 2, 1)
    b = SpinMoments(0, 0, -1, 4, 4, 1)
    avg = SpinMoments.average([a, b])
    assert avg.lz == 0 and avg.lx2 == 3
    assert avg.xi2(2.0) == pytest.approx((3 + 3 + 1) / 2.0)
