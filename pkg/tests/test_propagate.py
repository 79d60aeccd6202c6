import math

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from spinmo.basis import (
    FullBasis,
    NumberBasis,
    SectorBasis,
    StateVector,
    build_full_basis,
    build_pair_basis,
    polar_state,
)
from spinmo.errors import StepSizeError
from spinmo.observables import reference_eigensystem
from spinmo.operators import (
    ExtendedParams,
    PhysicsParams,
    hamiltonian_full,
    hamiltonian_pair,
    lx_full,
    oscillator_hamiltonian,
)
from spinmo.propagate import evolve_constant, evolve_ramp, evolve_rotating, ramp_default_dt
from spinmo.schedule import Hold, LinearSweep, ParabolicRamp
from spinmo.spectra import eigensolve_tridiagonal


def fidelity(a, b):
    return abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2


def test_eigenstate_is_stationary():
    p = PhysicsParams(25.0, 20, 3.0)
    h = hamiltonian_pair(p)
    eig = eigensolve_tridiagonal(h)
    st = StateVector(build_pair_basis(20), eig.vectors[:, 3].astype(complex))
    out = evolve_constant(st, h, 0.37)
    assert abs(fidelity(st, out) - 1) < 1e-10


def test_singlet_invariant_at_zero_q():
    n = 12
    p = PhysicsParams(25.0, n, 0.0)
    eig = reference_eigensystem(n)
    st = StateVector(build_pair_basis(n), eig.ground().astype(complex))
    out = evolve_constant(st, hamiltonian_pair(p), 1.7)
    assert abs(fidelity(st, out) - 1) < 1e-10


def test_composition_constant_h():
    p = PhysicsParams(25.0, 16, 2.0)
    h = hamiltonian_pair(p)
    st = polar_state(build_pair_basis(16))
    one = evolve_constant(evolve_constant(st, h, 0.12), h, 0.34)
    two = evolve_constant(st, h, 0.46)
    assert fidelity(one, two) >= 1 - 1e-9


def test_norm_preserved():
    p = PhysicsParams(25.0, 30, 1.0)
    st = polar_state(build_pair_basis(30))
    out = evolve_constant(st, hamiltonian_pair(p), 3.0)
    assert abs(out.norm - 1) < 1e-9


def test_ramp_matches_constant_on_hold_segment():
    n = 24
    p = PhysicsParams(25.0, n, 0.0)
    st = polar_state(build_pair_basis(n))
    q = 4.0
    seg = Hold(q, 0.21)
    ref = evolve_constant(st, hamiltonian_pair(p.with_q(q)), 0.21)
    out, _ = evolve_ramp(st, seg, p)
    assert fidelity(ref, out) >= 1 - 1e-8


def test_ramp_energy_conservation_on_hold():
    n = 24
    p = PhysicsParams(25.0, n, 2.5)
    h = hamiltonian_pair(p)
    st = polar_state(build_pair_basis(n))
    out, _ = evolve_ramp(st, Hold(2.5, 0.31), p)
    e0 = h.expectation(st.amplitudes)
    e1 = h.expectation(out.amplitudes)
    hnorm = max(np.max(np.abs(h.diag)), np.max(np.abs(h.offdiag)))
    assert abs(e1 - e0) <= 1e-8 * hnorm


def test_ramp_dt_halving_converges():
    n = 40
    p = PhysicsParams(25.0, n)
    st = polar_state(build_pair_basis(n))
    seg = ParabolicRamp(60.0, 0.5, 0.0, 0.35)
    d0 = ramp_default_dt(st, seg, p)
    a, _ = evolve_ramp(st, seg, p, dt=d0)
    b, _ = evolve_ramp(st, seg, p, dt=d0 / 2)
    assert abs(fidelity(a, b) - 1) < 1e-6


def test_ramp_rejects_oversized_dt():
    n = 40
    p = PhysicsParams(25.0, n)
    st = polar_state(build_pair_basis(n))
    seg = ParabolicRamp(100.0, 0.5, 0.0, 0.3)
    with pytest.raises(StepSizeError):
        evolve_ramp(st, seg, p, dt=0.05)


def test_ramp_samples_equal_final_state():
    n = 20
    p = PhysicsParams(25.0, n)
    st = polar_state(build_pair_basis(n))
    seg = LinearSweep(10.0, 1.0, 0.2)
    final, samples = evolve_ramp(st, seg, p, sample_times=np.array([0.1, 0.2]))
    assert samples[-1][0] == 0.2
    assert np.array_equal(samples[-1][1].amplitudes, final.amplitudes)


def test_oscillator_half_period_mirror():
    m, w, d = 1.0, 1.0, 150
    x0 = 10.0 / math.sqrt(m * w)
    f0 = x0 * m * w * w
    left = eigensolve_tridiagonal(oscillator_hamiltonian(m, w, f0, d)).ground()
    right = eigensolve_tridiagonal(oscillator_hamiltonian(m, w, -f0, d)).ground()
    st = StateVector(NumberBasis(d), left.astype(complex))
    out = evolve_constant(st, oscillator_hamiltonian(m, w, 0.0, d), math.pi / w)
    assert abs(np.vdot(right, out.amplitudes)) ** 2 >= 0.999


def test_evolve_constant_dimension_mismatch():
    p = PhysicsParams(25.0, 10)
    st = polar_state(build_pair_basis(12))
    with pytest.raises(ValueError):
        evolve_constant(st, hamiltonian_pair(p), 0.1)


def test_full_basis_krylov_evolution_matches_dense():
    n = 5
    basis = build_full_basis(n)
    base = PhysicsParams(25.0, n, 1.0, convention="plain")
    ext = ExtendedParams(base, p_hz=3.0, h_hz=7.0)
    h = hamiltonian_full(ext, basis)
    psi0 = polar_state(basis)
    out = evolve_constant(psi0, h, 0.11)
    dense = scipy.linalg.expm(-1j * 0.11 * h.toarray()) @ psi0.amplitudes
    assert np.max(np.abs(out.amplitudes - dense)) < 1e-9


def test_rotating_h0_reduces_to_block_evolution():
    n = 6
    basis = build_full_basis(n)
    base = PhysicsParams(25.0, n, 0.7)
    ext = ExtendedParams(base, p_hz=1e4, h_hz=0.0)
    psi0 = polar_state(basis)
    rot = evolve_rotating(psi0, ext, 0.15, mode="averaged")
    pair = polar_state(build_pair_basis(n))
    ref = evolve_constant(pair, hamiltonian_pair(base), 0.15)
    blk = basis.block(0)
    got = rot.amplitudes[blk]
    assert abs(abs(np.vdot(got, ref.amplitudes)) ** 2 - 1) < 1e-10


def test_rotating_p0_matches_static_transverse():
    n = 6
    basis = build_full_basis(n)
    base = PhysicsParams(25.0, n, 0.5, convention="plain")
    ext = ExtendedParams(base, p_hz=0.0, h_hz=4.0)
    psi0 = polar_state(basis)
    out = evolve_rotating(psi0, ext, 0.2, mode="exact_scaled_p", dt=2e-5)
    h = hamiltonian_full(ext, basis)
    dense = scipy.linalg.expm(-1j * 0.2 * h.toarray()) @ psi0.amplitudes
    assert abs(abs(np.vdot(dense, out.amplitudes)) ** 2 - 1) < 1e-6


def test_rotating_averaged_refuses_large_h_over_p():
    n = 4
    basis = build_full_basis(n)
    base = PhysicsParams(25.0, n, 0.0)
    ext = ExtendedParams(base, p_hz=100.0, h_hz=50.0)
    with pytest.raises(ValueError):
        evolve_rotating(polar_state(basis), ext, 0.1, mode="averaged")
