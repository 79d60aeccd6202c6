"""Hamiltonians and collective-spin operators.

The working Hamiltonian for the condensate is

    H = c2p * L^2 / N  -  q * n0                      (pair / sector chains)
    H = c2p * L^2 / N  -  q * n0 - p * Lz - h * Lx    (full basis)

with ``c2p`` the spin-exchange strength, ``q`` the quadratic Zeeman
splitting, ``p`` the linear Zeeman splitting and ``h`` a transverse
coupling, all supplied in Hz.  Internally matrices are stored either in
angular units (rad/s, the default: Hz inputs are multiplied by 2*pi) or
in plain Hz; the choice is the ``convention`` flag carried by
:class:`PhysicsParams` and recorded in every output manifest.

Within a fixed-(N, M) sector the Hamiltonian is a real symmetric
tridiagonal chain.  With a = |M|, site k holding ``n0 = N - a - 2k``
m = 0 atoms, the closed forms are

    (L^2)[k, k]   = a(a+1) + 2*[(k+a+1)*n0 + (n0+1)*k]
    (L^2)[k, k+1] = 2*sqrt((k+1)*(k+a+1)*n0*(n0-1))

which at M = 0 reduce to ``2*[(N-2k)(2k+1) + k]`` and
``2(k+1)*sqrt((N-2k)(N-2k-1))``.  They are cross-validated entrywise
against a brute-force ladder-operator construction in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .basis import FullBasis, SectorBasis

GYROMAGNETIC_RATIO_HZ_PER_G = -0.7e6

_CONVENTIONS = ("angular", "plain")


def unit_factor(convention: str) -> float:
    """Hz -> internal-unit multiplier: 2*pi for 'angular', 1 for 'plain'."""
    if convention not in _CONVENTIONS:
        raise ValueError(f"unknown unit convention {convention!r}; expected one of {_CONVENTIONS}")
    return 2.0 * math.pi if convention == "angular" else 1.0


@dataclass(frozen=True)
class PhysicsParams:
    """Condensate parameters; energies in Hz, converted on matrix build."""

    c2p_hz: float
    n_atoms: int
    q_hz: float = 0.0
    convention: str = "angular"

    def __post_init__(self):
        if self.c2p_hz <= 0:
            raise ValueError("c2p_hz must be > 0 (antiferromagnetic interactions)")
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        unit_factor(self.convention)  # validates the flag

    @property
    def factor(self) -> float:
        return unit_factor(self.convention)

    def with_q(self, q_hz: float) -> "PhysicsParams":
        return replace(self, q_hz=q_hz)


@dataclass(frozen=True)
class ExtendedParams:
    """Pair-sector parameters plus linear Zeeman and transverse couplings.

    ``p_hz = -gamma * (B_z + delta_Bz)`` and ``h_hz = -gamma * delta_Bx``
    with gamma the gyromagnetic ratio in Hz/G and fields in Gauss.
    """

    base: PhysicsParams
    p_hz: float
    h_hz: float

    @classmethod
    def from_fields(
        cls,
        base: PhysicsParams,
        bz_gauss: float,
        delta_bz_gauss: float = 0.0,
        delta_bx_gauss: float = 0.0,
        gamma_hz_per_gauss: float = GYROMAGNETIC_RATIO_HZ_PER_G,
    ) -> "ExtendedParams":
        return cls(
            base=base,
            p_hz=-gamma_hz_per_gauss * (bz_gauss + delta_bz_gauss),
            h_hz=-gamma_hz_per_gauss * delta_bx_gauss,
        )


@dataclass(frozen=True)
class TriMatrix:
    """Real symmetric tridiagonal matrix stored as two arrays."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "diag", np.asarray(self.diag, dtype=np.float64))
        object.__setattr__(self, "offdiag", np.asarray(self.offdiag, dtype=np.float64))
        if self.offdiag.shape != (max(self.size - 1, 0),):
            raise ValueError("offdiag must have length len(diag) - 1")
        if not (np.all(np.isfinite(self.diag)) and np.all(np.isfinite(self.offdiag))):
            raise ValueError("matrix entries must be finite")

    @property
    def size(self) -> int:
        return self.diag.shape[0]

    def to_dense(self) -> np.ndarray:
        m = np.diag(self.diag)
        if self.size > 1:
            idx = np.arange(self.size - 1)
            m[idx, idx + 1] = self.offdiag
            m[idx + 1, idx] = self.offdiag
        return m

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        if self.size > 1:
            out[:-1] += self.offdiag * v[1:]
            out[1:] += self.offdiag * v[:-1]
        return out

    def expectation(self, v: np.ndarray) -> float:
        return float(np.real(np.vdot(v, self.matvec(v))))

    def gershgorin_bounds(self) -> tuple[float, float]:
        """Enclosing interval for the spectrum (cheap, slightly loose)."""
        r = np.zeros(self.size)
        if self.size > 1:
            r[:-1] += np.abs(self.offdiag)
            r[1:] += np.abs(self.offdiag)
        return float(np.min(self.diag - r)), float(np.max(self.diag + r))

    def scaled(self, a: float) -> "TriMatrix":
        return TriMatrix(a * self.diag, a * self.offdiag)

    def add_diagonal(self, d: np.ndarray | float) -> "TriMatrix":
        return TriMatrix(self.diag + d, self.offdiag)


def l2_sector(n_atoms: int, magnetization: int = 0) -> TriMatrix:
    """Total-spin-squared chain in the fixed-(N, M) sector, units of 1."""
    basis = SectorBasis(n_atoms, magnetization)
    a = abs(magnetization)
    k = np.arange(basis.size, dtype=np.float64)
    n0 = basis.n_zero.astype(np.float64)
    diag = a * (a + 1.0) + 2.0 * ((k + a + 1.0) * n0 + (n0 + 1.0) * k)
    kk, n0k = k[:-1], n0[:-1]
    off = 2.0 * np.sqrt((kk + 1.0) * (kk + a + 1.0) * n0k * (n0k - 1.0))
    return TriMatrix(diag, off)


def l2_pair(n_atoms: int) -> TriMatrix:
    """Pair-sector (M = 0) total-spin-squared chain."""
    return l2_sector(n_atoms, 0)


def n0_sector(basis: SectorBasis) -> np.ndarray:
    """Diagonal of the m = 0 number operator in a chain sector."""
    return basis.n_zero.astype(np.float64)


def hamiltonian_sector(params: PhysicsParams, basis: SectorBasis) -> TriMatrix:
    """``c2p * L^2 / N - q * n0`` on a chain sector, in internal units.

    ``basis.n_atoms`` may differ from ``params.n_atoms``; the L^2 term is
    always scaled by the sector's own atom number so that the same
    physics applies after loss events shrink N.
    """
    n = basis.n_atoms
    l2 = l2_sector(n, basis.magnetization)
    f = params.factor
    diag = f * (params.c2p_hz / n * l2.diag - params.q_hz * basis.n_zero)
    off = f * (params.c2p_hz / n) * l2.offdiag
    return TriMatrix(diag, off)


def hamiltonian_pair(params: PhysicsParams) -> TriMatrix:
    """Pair-sector Hamiltonian for ``params.n_atoms`` atoms, internal units."""
    return hamiltonian_sector(params, SectorBasis(params.n_atoms, 0))


def lz_full(basis: FullBasis) -> np.ndarray:
    """Diagonal of L_z (value M on each magnetization block), units of 1."""
    return basis.magnetizations.astype(np.float64)


def n0_full(basis: FullBasis) -> np.ndarray:
    """Diagonal of the m = 0 number operator on the full basis."""
    return basis.states[:, 1].astype(np.float64)


def _transverse_entries(basis: FullBasis):
    """Rows/cols/values of the raising half of L_x (M -> M+1 couplings)."""
    rows, cols, vals = [], [], []
    s = math.sqrt(2.0) / 2.0
    for i, (nm, n0, npl) in enumerate(basis.states):
        if n0 >= 1:  # a_+1^dag a_0 : (nm, n0, npl) -> (nm, n0-1, npl+1)
            j = basis.index_of((nm, n0 - 1, npl + 1))
            rows.append(j)
            cols.append(i)
            vals.append(s * math.sqrt((npl + 1) * n0))
        if nm >= 1:  # a_0^dag a_-1 : (nm, n0, npl) -> (nm-1, n0+1, npl)
            j = basis.index_of((nm - 1, n0 + 1, npl))
            rows.append(j)
            cols.append(i)
            vals.append(s * math.sqrt((n0 + 1) * nm))
    return rows, cols, vals


def lx_full(basis: FullBasis) -> sp.csr_matrix:
    """Sparse symmetric L_x; couples magnetization blocks M <-> M+1 only."""
    rows, cols, vals = _transverse_entries(basis)
    d = basis.size
    up = sp.csr_matrix((vals, (rows, cols)), shape=(d, d))
    return (up + up.T).tocsr()


def ly_full(basis: FullBasis) -> sp.csr_matrix:
    """Sparse Hermitian L_y (purely imaginary entries)."""
    rows, cols, vals = _transverse_entries(basis)
    d = basis.size
    up = sp.csr_matrix((np.asarray(vals) * -1j, (rows, cols)), shape=(d, d))
    return (up + up.conj().T).tocsr()


def l2_full(basis: FullBasis) -> sp.csr_matrix:
    """Block-diagonal L^2 assembled from the per-sector chain forms."""
    n = basis.n_atoms
    d = basis.size
    rows, cols, vals = [], [], []
    for m in range(-n, n + 1):
        blk = basis.block(m)
        chain = l2_sector(n, m)
        base = blk.start
        for k in range(chain.size):
            rows.append(base + k)
            cols.append(base + k)
            vals.append(chain.diag[k])
        for k in range(chain.size - 1):
            rows.extend((base + k, base + k + 1))
            cols.extend((base + k + 1, base + k))
            vals.extend((chain.offdiag[k], chain.offdiag[k]))
    return sp.csr_matrix((vals, (rows, cols)), shape=(d, d))


def hamiltonian_full(
    ext: ExtendedParams, basis: FullBasis, include_transverse: bool = True
) -> sp.csr_matrix:
    """Full-basis Hamiltonian in internal units (complex if transverse)."""
    p = ext.base
    f = p.factor
    h = f * (
        p.c2p_hz / basis.n_atoms * l2_full(basis)
        - sp.diags(p.q_hz * n0_full(basis) + ext.p_hz * lz_full(basis))
    )
    if include_transverse and ext.h_hz != 0.0:
        h = h - f * ext.h_hz * lx_full(basis)
    return h.tocsr()


def oscillator_hamiltonian(
    mass: float, omega: float, force: float, truncation: int
) -> TriMatrix:
    """Tilted harmonic oscillator in its number basis (hbar = 1).

    ``H = P^2/2M + M w^2 x^2 / 2 + F x`` truncated to the lowest
    ``truncation`` number states; x = (a + a^dag)/sqrt(2 M w) makes the
    matrix tridiagonal.
    """
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    if mass <= 0 or omega <= 0:
        raise ValueError("mass and omega must be positive")
    n = np.arange(truncation, dtype=np.float64)
    diag = omega * (n + 0.5)
    off = force * np.sqrt((n[:-1] + 1.0) / (2.0 * mass * omega))
    return TriMatrix(diag, off)
