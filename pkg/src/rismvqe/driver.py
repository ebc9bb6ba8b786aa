"""Macro self-consistency between the electronic solver and the solvent.

Each cycle: (1) build the solvated one-electron operator from the current
solvent point charges, (2) solve the electronic problem (RHF, optionally
followed by VQE in the active space), (3) assemble the AO density, (4)
evaluate the solute ESP on the solvent grid, (5) solve the 3D solvent
problem, (6) refresh the point charges and the excess chemical potential.
The loop starts from the gas phase and stops when the Helmholtz energy is
stable on two consecutive cycles.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import integrals as ints_mod
from . import units
from .basis import build_basis
from .qubit_hamiltonian import build_active_hamiltonian, jordan_wigner
from .rhf import ao_to_mo_eri, mp2_natural_orbitals, run_rhf
from .rism3d import (Grid3D, RISMSolution, SusceptibilityOnGrid,
                     binding_energy, build_potential_parts,
                     excess_chemical_potential, site_types,
                     solve_3drism, solvent_point_charges)
from .susceptibility import load_susceptibility, solve_1d_rism
from .vqe import (UCCSDAnsatz, expectation, measure_1rdm, optimize,
                  prepare_state)

log = logging.getLogger(__name__)


class MacroSCFError(RuntimeError):
    pass


@dataclass
class SCFState:
    cycle: int
    A: float  # Helmholtz energy, hartree
    E_solute: float  # <H_iso(theta)> with the solvated wavefunction
    delta_mu: float
    E_solv: float  # <H_solv(theta)>
    D: Optional[np.ndarray]  # AO density
    n_charges: int
    rism_residual: float
    vqe_gradient_norm: float
    theta: Optional[np.ndarray] = None

    @property
    def V_solv(self):
        """Solute-solvent interaction expectation <H_solv> - <H_iso>."""
        return self.E_solv - self.E_solute


@dataclass
class SCFResult:
    state: SCFState
    history: List[SCFState]
    converged: bool
    cycles: int
    gas_phase: bool
    fields: object = None  # converged SiteFields
    grid: Optional[Grid3D] = None
    types: list = None
    basis: object = None
    integrals: object = None
    orbitals: Optional[np.ndarray] = None  # ordered MO coefficients
    solvent_matrix: Optional[np.ndarray] = None
    charge_points: Optional[np.ndarray] = None
    charge_values: Optional[np.ndarray] = None
    E_bind: float = 0.0

    @property
    def A(self):
        return self.state.A


def helmholtz_energy(state: SCFState) -> float:
    """A = <H_iso(theta)> + dmu; the gas Hamiltonian expectation is taken
    with the solvated wavefunction."""
    return state.E_solute + state.delta_mu


def potential_energy(result: SCFResult) -> float:
    """E_pot = <H_iso(theta)> + E_bind with the distribution-weighted
    interaction integral E_bind (zero in the gas phase)."""
    return result.state.E_solute + result.E_bind


@dataclass
class WarmStart:
    theta: Optional[np.ndarray] = None
    c_fields: Optional[np.ndarray] = None


def _order_orbitals(rhf, spec, eri, n_electrons):
    """Column-order the MOs so frozen-core orbitals come first and the
    active window follows, per the configured selection rule."""
    if spec is None:
        return rhf.C
    n_core = (n_electrons - spec.n_electrons) // 2
    if isinstance(spec.selection, str):
        if spec.selection == "canonical-window":
            return rhf.C
        C_no, _occ = mp2_natural_orbitals(rhf, eri)
        return C_no
    active = list(spec.selection)
    rest = [i for i in range(rhf.C.shape[1]) if i not in active]
    cores = rest[:n_core]
    tail = rest[n_core:]
    return rhf.C[:, cores + active + tail]


def _rhf_solute_energy(D, integrals, eri):
    from .rhf import build_fock
    h = integrals.h_core
    F = build_fock(h, D, eri)
    return 0.5 * float(np.sum(D * (h + F))) + integrals.E_nn


def load_or_compute_chi(config, cache_path=None):
    """Susceptibility from config.chi_path, an optional cache file, or a
    fresh neat-solvent solve."""
    if config.chi_path:
        chi = load_susceptibility(config.chi_path)
        chi.check_compatible(config.solvent)
        return chi
    if cache_path is not None:
        from pathlib import Path
        if Path(cache_path).exists():
            chi = load_susceptibility(cache_path)
            chi.check_compatible(config.solvent)
            return chi
    chi = solve_1d_rism(config.solvent)
    if cache_path is not None:
        from .susceptibility import save_susceptibility
        save_susceptibility(chi, cache_path)
    return chi


def run_scf(config, gas_only=False, chi=None, warm_start=None,
            active_solver: Optional[Callable] = None,
            grid: Optional[Grid3D] = None) -> SCFResult:
    """Drive the electronic/solvent loop to self-consistency.

    ``active_solver(h_pauli, ansatz, theta0) -> (energy, theta, psi, gnorm)``
    replaces the built-in VQE when supplied (e.g. exact diagonalization in
    tests).  ``gas_only`` skips the solvent entirely.
    """
    atoms = config.atoms
    basis = build_basis(atoms, config.basis_name)
    tensors = ints_mod.core_integrals(basis, atoms)
    tensors.eri = ints_mod.electron_repulsion(basis)
    n_el = config.n_electrons
    spec = config.active_space

    chi_grid = None
    types = None
    if not gas_only:
        if chi is None:
            chi = load_or_compute_chi(config)
        if grid is None:
            grid = Grid3D.around(config.geometry_bohr(), config.grid.points,
                                 config.grid.spacing_bohr)
        chi_grid = SusceptibilityOnGrid(chi, config.solvent, grid)
        types = site_types(config.solvent)
        grid_points = grid.points()

    charge_points = np.zeros((0, 3))
    charge_values = np.zeros(0)
    theta = warm_start.theta if warm_start is not None else None
    c_init = warm_start.c_fields if warm_start is not None else None
    ansatz = None
    history: List[SCFState] = []
    fields = None
    orbitals = None
    V_solv_mat = None
    rism_res = 0.0
    converged = False
    beta = config.solvent.beta

    for cycle in range(1, config.max_cycles + 1):
        t0 = time.time()
        if len(charge_values):
            V_solv_mat = ints_mod.point_charge_operator(
                basis, charge_points, charge_values)
        else:
            V_solv_mat = None

        rhf = run_rhf(tensors, n_el, extra_one_electron=V_solv_mat)

        if config.method == "vqe":
            # orbitals refresh every cycle; the window indices stay fixed
            orbitals = _order_orbitals(rhf, spec, tensors.eri, n_el)
            h_solv = build_active_hamiltonian(
                orbitals, tensors, V_solv_mat, spec.n_electrons,
                spec.n_orbitals, n_el)
            h_iso = build_active_hamiltonian(
                orbitals, tensors, None, spec.n_electrons, spec.n_orbitals,
                n_el) if V_solv_mat is not None else h_solv
            ph_solv = jordan_wigner(h_solv)
            ph_iso = jordan_wigner(h_iso) if V_solv_mat is not None else ph_solv
            if ansatz is None:
                ansatz = UCCSDAnsatz(n_electrons=spec.n_electrons,
                                     n_orbitals=spec.n_orbitals)
            if active_solver is not None:
                E_solv, theta, psi, gnorm = active_solver(ph_solv, ansatz, theta)
            else:
                out = optimize(ph_solv, ansatz, theta0=theta)
                E_solv, theta, gnorm = out.energy, out.theta, out.gradient_norm
                psi = prepare_state(ansatz, theta)
            E_solute = expectation(ph_iso, psi) if V_solv_mat is not None else E_solv
            gamma_act = measure_1rdm(psi, spec.n_orbitals)
            n_core = (n_el - spec.n_electrons) // 2
            nmo = orbitals.shape[1]
            gamma = np.zeros((nmo, nmo))
            gamma[:n_core, :n_core] = 2.0 * np.eye(n_core)
            gamma[n_core:n_core + spec.n_orbitals,
                  n_core:n_core + spec.n_orbitals] = gamma_act
            D = orbitals @ gamma @ orbitals.T
        else:
            orbitals = rhf.C
            D = rhf.D
            E_solute = _rhf_solute_energy(D, tensors, tensors.eri)
            E_solv = E_solute + (float(np.sum(D * V_solv_mat))
                                 if V_solv_mat is not None else 0.0)
            gnorm = 0.0

        if gas_only:
            state = SCFState(cycle=cycle, A=E_solute, E_solute=E_solute,
                             delta_mu=0.0, E_solv=E_solv, D=D, n_charges=0,
                             rism_residual=0.0, vqe_gradient_norm=gnorm,
                             theta=None if theta is None else theta.copy())
            history.append(state)
            converged = True
            break

        esp = ints_mod.esp_at_points(basis, atoms, D, grid_points)
        u_lj, u_el = build_potential_parts(atoms, esp.reshape(grid.shape),
                                           config.solvent, grid, beta=beta)
        fields, res_hist = solve_3drism(
            u_lj + u_el, chi_grid, grid, beta, tol=config.rism_tol,
            max_iter=config.rism_max_iter, c_init=c_init,
            charge_ramp=(u_lj, u_el))
        c_init = fields.c
        rism_res = res_hist[-1]
        delta_mu = excess_chemical_potential(fields, types, grid, beta)
        charge_points, charge_values, total_q = solvent_point_charges(
            fields, types, grid, threshold=config.charge_threshold)

        A = E_solute + delta_mu
        state = SCFState(cycle=cycle, A=A, E_solute=E_solute,
                         delta_mu=delta_mu, E_solv=E_solv, D=D,
                         n_charges=len(charge_values), rism_residual=rism_res,
                         vqe_gradient_norm=gnorm,
                         theta=None if theta is None else theta.copy())
        history.append(state)
        log.info("cycle %2d: A=%.8f dmu=%+.6f q=%d (%.1fs)", cycle, A,
                 delta_mu, len(charge_values), time.time() - t0)

        if len(charge_values) == 0 and abs(delta_mu) < 1e-14:
            converged = True  # decoupled solvent: the loop is already fixed
            break
        deltas = [abs(history[i].A - history[i - 1].A)
                  for i in range(1, len(history))]
        if len(deltas) >= 2 and deltas[-1] < config.energy_tol \
                and deltas[-2] < config.energy_tol:
            converged = True
            break
        if len(deltas) >= 10 and all(
                deltas[-i] >= deltas[-i - 1] for i in range(1, 10)):
            raise MacroSCFError(
                f"macro loop oscillating: |dA| non-decreasing for 10 cycles"
                f" (last dA={deltas[-1]:.3e}, rism residual {rism_res:.3e},"
                f" vqe gradient {history[-1].vqe_gradient_norm:.3e})")

    if not converged:
        raise MacroSCFError(
            f"macro loop not converged in {config.max_cycles} cycles"
            f" (last |dA|={abs(history[-1].A - history[-2].A):.3e})")

    result = SCFResult(
        state=history[-1], history=history, converged=converged,
        cycles=len(history), gas_phase=gas_only, fields=fields, grid=grid,
        types=types, basis=basis, integrals=tensors, orbitals=orbitals,
        solvent_matrix=V_solv_mat, charge_points=charge_points,
        charge_values=charge_values)
    if fields is not None:
        result.E_bind = binding_energy(fields, types, grid)
    return result


def scf_log_rows(result: SCFResult):
    """Per-cycle CSV rows: cycle, A, E_solute, dmu, <H_solv>, <V_solv>,
    RISM residual, VQE gradient norm."""
    rows = []
    for s in result.history:
        rows.append((s.cycle, s.A, s.E_solute, s.delta_mu, s.E_solv,
                     s.V_solv, s.rism_residual, s.vqe_gradient_norm))
    return rows
