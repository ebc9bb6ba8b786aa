"""Active-space second-quantized Hamiltonians and their qubit mapping.

Spin orbitals are interleaved: spatial orbital p with spin alpha sits on
qubit 2p, beta on qubit 2p+1.  That ordering fixes the identity of every
Pauli word, so it is part of the on-disk format.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .pauli import PauliHamiltonian, merge_raw_terms
from .rhf import ao_to_mo_eri

COEFF_PRUNE = 1e-12


@dataclass
class ActiveSpaceHamiltonian:
    """Core-folded (m electrons, n orbitals) Hamiltonian in an MO basis.

    ``constant`` carries nuclear repulsion plus the frozen-core energy,
    including the core's interaction with any one-electron solvent term
    folded into ``h1``.
    """

    constant: float
    h1: np.ndarray  # (n, n), hermitian
    g2: np.ndarray  # (n, n, n, n), chemists' (pq|rs)
    n_orbitals: int
    n_electrons: int

    def __post_init__(self):
        if not np.allclose(self.h1, self.h1.T, atol=1e-10):
            raise ValueError("one-body integrals not hermitian")

    @property
    def n_qubits(self):
        return 2 * self.n_orbitals


def build_active_hamiltonian(C, integrals, solvent_matrix, active_electrons,
                             active_orbitals, n_total_electrons, eri=None):
    """Fold frozen-core orbitals and project onto the active window.

    ``C`` must hold orthonormal orbitals ordered core-first: columns
    [0, n_core) are doubly occupied and folded away, the next
    ``active_orbitals`` columns become the correlated space.
    """
    if eri is None:
        eri = integrals.eri
    n_core2 = n_total_electrons - active_electrons
    if n_core2 < 0 or n_core2 % 2 != 0:
        raise ValueError(
            f"{active_electrons} active electrons leave an invalid frozen count"
            f" {n_core2}")
    n_core = n_core2 // 2
    n_used = n_core + active_orbitals
    if n_used > C.shape[1]:
        raise ValueError("active window exceeds available orbitals")
    Csub = C[:, :n_used]
    ortho = Csub.T @ integrals.S @ Csub
    if not np.allclose(ortho, np.eye(n_used), atol=1e-8):
        raise ValueError("orbital coefficients not orthonormal under S")

    h_ao = integrals.h_core
    if solvent_matrix is not None:
        h_ao = h_ao + solvent_matrix
    h_mo = Csub.T @ h_ao @ Csub
    g_mo = ao_to_mo_eri(eri, Csub)

    core = np.arange(n_core)
    act = np.arange(n_core, n_used)
    constant = integrals.E_nn
    if n_core:
        constant += 2.0 * np.trace(h_mo[np.ix_(core, core)])
        g_cc = g_mo[np.ix_(core, core, core, core)]
        constant += 2.0 * np.einsum("iijj->", g_cc) - np.einsum("ijji->", g_cc)
        j_core = 2.0 * np.einsum("pqii->pq", g_mo[np.ix_(act, act, core, core)])
        k_core = np.einsum("piiq->pq", g_mo[np.ix_(act, core, core, act)])
        h1 = h_mo[np.ix_(act, act)] + j_core - k_core
    else:
        h1 = h_mo
    g2 = g_mo[np.ix_(act, act, act, act)]
    return ActiveSpaceHamiltonian(constant=float(constant), h1=h1, g2=g2,
                                  n_orbitals=active_orbitals,
                                  n_electrons=active_electrons)


def _ladder_masks(q):
    """Raw (x, z, sign-of-second-term) encoding of a ladder operator on
    qubit q: (X -/+ XZ)/2 times the Jordan-Wigner Z string below q."""
    x = np.int64(1) << q
    zstr = x - 1
    return x, zstr, zstr | x


def _multiply_ladder(x_acc, z_acc, c_acc, q, dagger):
    """Multiply accumulated raw terms (shape (..., T)) by one ladder op."""
    xl, z0, z1 = _ladder_masks(q)
    # raw terms: +1/2 X Z^{<q}  and  (+1/2 if dagger else -1/2) X Z^{<=q}
    sgn2 = 0.5 if dagger else -0.5
    # commuting X^{xl} past Z^{z_acc}
    comm = 1.0 - 2.0 * (np.bitwise_count(z_acc & xl) & 1).astype(np.float64)
    x_new = np.concatenate([x_acc ^ xl, x_acc ^ xl], axis=-1)
    z_new = np.concatenate([z_acc ^ z0, z_acc ^ z1], axis=-1)
    c_new = np.concatenate([c_acc * comm * 0.5, c_acc * comm * sgn2], axis=-1)
    return x_new, z_new, c_new


def _ladder_product(qubits, daggers, coeff):
    """Raw Pauli expansion of coeff * prod_k ladder(qubits[k], daggers[k]).

    ``qubits`` entries are integer arrays (broadcast over a batch axis);
    returns flat (x, z, c) arrays.
    """
    batch = np.broadcast(*qubits).shape
    x = np.zeros(batch + (1,), dtype=np.int64)
    z = np.zeros(batch + (1,), dtype=np.int64)
    c = np.full(batch + (1,), 1.0)
    c[..., 0] = coeff
    for q, dg in zip(qubits, daggers):
        qq = np.broadcast_to(np.asarray(q, dtype=np.int64)[..., None], x.shape[:-1] + (1,))
        x, z, c = _multiply_ladder(x, z, c, qq, dg)
    return x.ravel(), z.ravel(), c.ravel()


def _canonicalize(x, z, c):
    """Convert raw X^x Z^z coefficients to canonical Pauli coefficients.

    Odd-Y words must have cancelled for a hermitian input; they are checked
    and dropped.  Returns identity coefficient and sorted word arrays.
    """
    ny = np.bitwise_count(x & z)
    odd = ny % 2 == 1
    if np.any(np.absolute(c[odd]) > 1e-9):
        raise ValueError("non-hermitian fermionic input: odd-Y words survive")
    x, z, c, ny = x[~odd], z[~odd], c[~odd], ny[~odd]
    c = np.where(ny % 4 == 0, c, -c)
    ident = 0.0
    is_id = (x == 0) & (z == 0)
    if np.any(is_id):
        ident = float(c[is_id][0])
        x, z, c = x[~is_id], z[~is_id], c[~is_id]
    keep = np.absolute(c) > COEFF_PRUNE
    x, z, c = x[keep], z[keep], c[keep]
    order = np.lexsort((z, x))
    return ident, x[order], z[order], c[order]


def jordan_wigner(ham: ActiveSpaceHamiltonian) -> PauliHamiltonian:
    """Map the active-space Hamiltonian to Pauli form.

    H = sum_pq h_pq a+_ps a_qs
        + 1/2 sum_pqrs (pq|rs) a+_ps a+_rt a_st a_qs  + constant.
    """
    n = ham.n_orbitals
    xs, zs, cs = [], [], []

    p, q = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    h1 = ham.h1
    for sigma in (0, 1):
        x, z, c = _ladder_product(
            [2 * p + sigma, 2 * q + sigma], [True, False], h1)
        xs.append(x)
        zs.append(z)
        cs.append(c)

    if n > 0 and np.any(ham.g2):
        pg, qg, rg, sg = np.meshgrid(*([np.arange(n)] * 4), indexing="ij")
        g = 0.5 * ham.g2
        for sigma in (0, 1):
            for tau in (0, 1):
                x, z, c = _ladder_product(
                    [2 * pg + sigma, 2 * rg + tau, 2 * sg + tau, 2 * qg + sigma],
                    [True, True, False, False], g)
                keep = c != 0.0
                xs.append(x[keep])
                zs.append(z[keep])
                cs.append(c[keep])

    x = np.concatenate(xs)
    z = np.concatenate(zs)
    c = np.concatenate(cs)
    x, z, c = merge_raw_terms(x, z, c, tol=0.0)
    ident, x, z, c = _canonicalize(x, z, c)
    return PauliHamiltonian(n_qubits=2 * n, x=x, z=z, coeffs=c,
                            identity=ident + ham.constant)


def l1_norm(ham: PauliHamiltonian) -> float:
    """Sum of absolute Pauli coefficients, identity excluded."""
    return ham.l1()


def total_number_operator(n_orbitals) -> PauliHamiltonian:
    """Jordan-Wigner image of the total particle-number operator."""
    nq = 2 * n_orbitals
    x = np.zeros(nq, dtype=np.int64)
    z = np.int64(1) << np.arange(nq, dtype=np.int64)
    coeffs = np.full(nq, -0.5)
    return PauliHamiltonian(n_qubits=nq, x=x, z=z, coeffs=coeffs,
                            identity=0.5 * nq)


def write_fcidump(ham: ActiveSpaceHamiltonian, path, ms2=0):
    """Integral-dump text file: header, then `value i j k l` records with
    1-based indices in chemists' notation; one-body as (i j 0 0), core
    energy as (0 0 0 0)."""
    n = ham.n_orbitals
    with open(path, "w") as fh:
        fh.write(f"&FCI NORB={n},NELEC={ham.n_electrons},MS2={ms2},\n")
        fh.write("  ORBSYM=" + "1," * n + "\n")
        fh.write("  ISYM=1,\n&END\n")
        for i in range(n):
            for j in range(i + 1):
                for k in range(i + 1):
                    lmax = j if k == i else k
                    for l in range(lmax + 1):
                        v = ham.g2[i, j, k, l]
                        if abs(v) > 1e-13:
                            fh.write(f"{v: .16e} {i + 1:3d} {j + 1:3d}"
                                     f" {k + 1:3d} {l + 1:3d}\n")
        for i in range(n):
            for j in range(i + 1):
                v = ham.h1[i, j]
                if abs(v) > 1e-13:
                    fh.write(f"{v: .16e} {i + 1:3d} {j + 1:3d}   0   0\n")
        fh.write(f"{ham.constant: .16e}   0   0   0   0\n")
