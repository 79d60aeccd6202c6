"""Hot inner loops for time stepping, jitted when numba is available.

The chain Hamiltonian during a ramp is ``H(t) = D0 + q(t) * Dq`` plus a
fixed symmetric off-diagonal, with q supplied at half-step resolution.
Each RK4 step subtracts the instantaneous mean energy (pure global
phase, accumulated and returned) so that step sizes are set by the
energy spread of the occupied levels, not by the absolute energy scale.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def deco(f):
            return f

        return deco


@njit(cache=True)
def _rk4_chain_jit(psi, diag0, qdiag, off, qgrid, dt):  # pragma: no cover - jitted
    n = psi.shape[0]
    nsteps = (qgrid.shape[0] - 1) // 2
    hv = np.empty(n, dtype=np.complex128)
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty(n, dtype=np.complex128)
    k3 = np.empty(n, dtype=np.complex128)
    y = np.empty(n, dtype=np.complex128)
    phase = 0.0
    drift = 0.0
    for s in range(nsteps):
        q0 = qgrid[2 * s]
        qm = qgrid[2 * s + 1]
        q1 = qgrid[2 * s + 2]
        # k1 and the mean-energy shift at the step start
        for i in range(n):
            hv[i] = (diag0[i] + q0 * qdiag[i]) * psi[i]
        for i in range(n - 1):
            hv[i] += off[i] * psi[i + 1]
            hv[i + 1] += off[i] * psi[i]
        eref = 0.0
        for i in range(n):
            eref += (psi[i].conjugate() * hv[i]).real
        phase += eref * dt
        for i in range(n):
            k1[i] = -1j * (hv[i] - eref * psi[i])
            y[i] = psi[i] + 0.5 * dt * k1[i]
        # k2 at midpoint
        for i in range(n):
            hv[i] = (diag0[i] + qm * qdiag[i]) * y[i]
        for i in range(n - 1):
            hv[i] += off[i] * y[i + 1]
            hv[i + 1] += off[i] * y[i]
        for i in range(n):
            k2[i] = -1j * (hv[i] - eref * y[i])
            y[i] = psi[i] + 0.5 * dt * k2[i]
        # k3 at midpoint
        for i in range(n):
            hv[i] = (diag0[i] + qm * qdiag[i]) * y[i]
        for i in range(n - 1):
            hv[i] += off[i] * y[i + 1]
            hv[i + 1] += off[i] * y[i]
        for i in range(n):
            k3[i] = -1j * (hv[i] - eref * y[i])
            y[i] = psi[i] + dt * k3[i]
        # k4 at step end
        for i in range(n):
            hv[i] = (diag0[i] + q1 * qdiag[i]) * y[i]
        for i in range(n - 1):
            hv[i] += off[i] * y[i + 1]
            hv[i + 1] += off[i] * y[i]
        norm2 = 0.0
        for i in range(n):
            k4 = -1j * (hv[i] - eref * y[i])
            psi[i] = psi[i] + (dt / 6.0) * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4)
            norm2 += (psi[i].conjugate() * psi[i]).real
        nrm = np.sqrt(norm2)
        drift += abs(nrm - 1.0)
        for i in range(n):
            psi[i] /= nrm
    return phase, drift


def _rk4_chain_numpy(psi, diag0, qdiag, off, qgrid, dt):
    """Vectorized fallback, algorithmically identical to the jitted path."""
    nsteps = (qgrid.shape[0] - 1) // 2

    def hmul(q, y):
        out = (diag0 + q * qdiag) * y
        out[:-1] += off * y[1:]
        out[1:] += off * y[:-1]
        return out

    phase = 0.0
    drift = 0.0
    for s in range(nsteps):
        q0, qm, q1 = qgrid[2 * s], qgrid[2 * s + 1], qgrid[2 * s + 2]
        hv = hmul(q0, psi)
        eref = float(np.real(np.vdot(psi, hv)))
        phase += eref * dt
        k1 = -1j * (hv - eref * psi)
        y = psi + 0.5 * dt * k1
        k2 = -1j * (hmul(qm, y) - eref * y)
        y = psi + 0.5 * dt * k2
        k3 = -1j * (hmul(qm, y) - eref * y)
        y = psi + dt * k3
        k4 = -1j * (hmul(q1, y) - eref * y)
        psi += (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        nrm = float(np.linalg.norm(psi))
        drift += abs(nrm - 1.0)
        psi /= nrm
    return phase, drift


def rk4_chain(psi, diag0, qdiag, off, qgrid, dt):
    """Advance psi in place through the half-step q grid; returns (phase, drift)."""
    if NUMBA:
        return _rk4_chain_jit(psi, diag0, qdiag, off, qgrid, dt)
    return _rk4_chain_numpy(psi, diag0, qdiag, off, qgrid, dt)
