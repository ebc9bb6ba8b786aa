"""Restricted Hartree-Fock with DIIS, plus MP2 natural orbitals.

The Fock operator may carry an extra one-electron term (the solvent
point-charge potential); its expectation value is then part of the
reported total energy.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

MAX_CYCLES = 200
DIIS_SIZE = 8
DENSITY_TOL = 1e-8
ENERGY_TOL = 1e-10
S_CONDITION_CAP = 1e10


class SCFConvergenceError(RuntimeError):
    def __init__(self, msg, last_energy=None, commutator_norm=None):
        super().__init__(msg)
        self.last_energy = last_energy
        self.commutator_norm = commutator_norm


@dataclass
class RHFResult:
    C: np.ndarray  # AO x MO coefficients
    orbital_energies: np.ndarray
    D: np.ndarray  # AO density, D = 2 C_occ C_occ^T
    E_electronic: float
    E_total: float
    converged: bool
    iterations: int
    n_occ: int
    energy_history: List[float] = field(default_factory=list)


def _orthogonalizer(S):
    w, V = np.linalg.eigh(S)
    if w[-1] / w[0] > S_CONDITION_CAP or w[0] <= 0:
        raise np.linalg.LinAlgError(
            f"overlap matrix near-singular (condition {w[-1] / max(w[0], 1e-300):.2e})")
    return V @ np.diag(w**-0.5) @ V.T


def build_fock(h_core, D, eri):
    J = np.einsum("rs,pqrs->pq", D, eri, optimize=True)
    K = np.einsum("rs,prqs->pq", D, eri, optimize=True)
    return h_core + J - 0.5 * K


def run_rhf(integrals, n_electrons, eri=None, extra_one_electron=None,
            max_cycles=MAX_CYCLES):
    """Solve RHF; ``extra_one_electron`` is folded into the core Hamiltonian.

    Converged when max|dD| < 1e-8 and |dE| < 1e-10 Eh.  E_total includes
    the nuclear repulsion and, when present, the extra operator's
    expectation value.
    """
    if n_electrons % 2 != 0:
        raise ValueError(f"RHF needs an even electron count, got {n_electrons}")
    if eri is None:
        eri = integrals.eri
    if eri is None:
        raise ValueError("two-electron integrals required")
    S = integrals.S
    h = integrals.h_core.copy()
    if extra_one_electron is not None:
        h = h + extra_one_electron
    X = _orthogonalizer(S)
    n_occ = n_electrons // 2

    # core-Hamiltonian guess
    e, Cp = np.linalg.eigh(X.T @ h @ X)
    C = X @ Cp
    D = 2.0 * C[:, :n_occ] @ C[:, :n_occ].T

    fock_list, err_list = [], []
    E_old = 0.0
    history = []
    converged = False
    it = 0
    comm_norm = np.inf
    for it in range(1, max_cycles + 1):
        F = build_fock(h, D, eri)
        E_elec = 0.5 * np.sum(D * (h + F))
        err = X.T @ (F @ D @ S - S @ D @ F) @ X
        comm_norm = np.max(np.absolute(err))

        fock_list.append(F)
        err_list.append(err)
        if len(fock_list) > DIIS_SIZE:
            fock_list.pop(0)
            err_list.pop(0)
        if len(fock_list) > 1:
            n = len(fock_list)
            Bm = -np.ones((n + 1, n + 1))
            Bm[n, n] = 0.0
            for i in range(n):
                for j in range(n):
                    Bm[i, j] = np.sum(err_list[i] * err_list[j])
            rhs = np.zeros(n + 1)
            rhs[n] = -1.0
            try:
                coef = np.linalg.solve(Bm, rhs)[:n]
                F = sum(c * f for c, f in zip(coef, fock_list))
            except np.linalg.LinAlgError:
                pass

        e, Cp = np.linalg.eigh(X.T @ F @ X)
        C = X @ Cp
        D_new = 2.0 * C[:, :n_occ] @ C[:, :n_occ].T
        dD = np.max(np.absolute(D_new - D))
        dE = abs(E_elec - E_old)
        history.append(E_elec)
        D, E_old = D_new, E_elec
        if dD < DENSITY_TOL and dE < ENERGY_TOL and it > 1:
            converged = True
            break

    E_elec = 0.5 * np.sum(D * (h + build_fock(h, D, eri)))
    if not converged:
        raise SCFConvergenceError(
            f"RHF not converged in {max_cycles} cycles"
            f" (last E={E_elec:.10f}, commutator={comm_norm:.2e})",
            last_energy=E_elec, commutator_norm=comm_norm)
    return RHFResult(C=C, orbital_energies=e, D=D, E_electronic=E_elec,
                     E_total=E_elec + integrals.E_nn, converged=converged,
                     iterations=it, n_occ=n_occ, energy_history=history)


def ao_to_mo_eri(eri, C):
    """(pq|rs) in the MO basis, chemists' notation."""
    t = np.einsum("pqrs,pi->iqrs", eri, C, optimize=True)
    t = np.einsum("iqrs,qj->ijrs", t, C, optimize=True)
    t = np.einsum("ijrs,rk->ijks", t, C, optimize=True)
    return np.einsum("ijks,sl->ijkl", t, C, optimize=True)


def mp2_natural_orbitals(rhf, eri_ao):
    """Natural orbitals of the unrelaxed MP2 one-particle density.

    Returns (C_no, occupations) with occupations sorted descending;
    degenerate occupations are ordered by the underlying orbital-energy
    index, so the output is deterministic.
    """
    if not rhf.converged:
        raise ValueError("RHF must be converged before correlation treatment")
    C = rhf.C
    eps = rhf.orbital_energies
    n_occ = rhf.n_occ
    nmo = C.shape[1]
    n_vir = nmo - n_occ
    if n_vir == 0:
        return C.copy(), np.full(n_occ, 2.0)

    mo_eri = ao_to_mo_eri(eri_ao, C)
    ov = mo_eri[:n_occ, n_occ:, :n_occ, n_occ:]  # (ia|jb)
    denom = (eps[:n_occ, None, None, None] - eps[None, n_occ:, None, None]
             + eps[None, None, :n_occ, None] - eps[None, None, None, n_occ:])
    t = ov / denom  # t[i,a,j,b]

    tt = 2.0 * t - t.transpose(0, 3, 2, 1)  # 2 t_ij^ab - t_ij^ba
    P_occ = -2.0 * np.einsum("iakb,jakb->ij", t, tt, optimize=True)
    P_vir = 2.0 * np.einsum("iajc,ibjc->ab", t, tt, optimize=True)

    gamma = np.zeros((nmo, nmo))
    gamma[:n_occ, :n_occ] = 2.0 * np.eye(n_occ) + 0.5 * (P_occ + P_occ.T)
    gamma[n_occ:, n_occ:] = 0.5 * (P_vir + P_vir.T)

    occ, U = np.linalg.eigh(gamma)
    order = np.argsort(-occ, kind="stable")
    occ = occ[order]
    U = U[:, order]
    # fix sign for reproducibility
    for k in range(nmo):
        j = np.argmax(np.absolute(U[:, k]))
        if U[j, k] < 0:
            U[:, k] = -U[:, k]
    return C @ U, occ


def write_molden_style_energies(path, rhf):
    """Plain-text orbital energy listing, one per line (debug aid)."""
    with open(path, "w") as fh:
        for i, e in enumerate(rhf.orbital_energies):
            fh.write(f"{i + 1:4d} {e: .12f}\n")
