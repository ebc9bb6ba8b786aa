"""Statevector emulation of the disentangled UCCSD ansatz.

Each exponential exp(theta (T - T+)) of a single or double excitation is
applied exactly: the generator couples computational basis states in
disjoint pairs, so the action is a plane rotation on each pair with the
Jordan-Wigner sign folded in.  Gradients are computed analytically by
back-propagating H|psi> through the product of exponentials.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from .pauli import PauliHamiltonian, apply_hamiltonian, expectation_value

MAX_OPT_ITER = 10_000
GRAD_TOL = 1e-6


@dataclass
class Statevector:
    """Unit-norm complex amplitudes over 2^n_qubits basis states; qubit q
    maps to bit q, spin orbitals interleaved as in the qubit Hamiltonian."""

    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError("amplitude vector has wrong length")

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    @classmethod
    def computational_basis(cls, n_qubits, index):
        amp = np.zeros(1 << n_qubits, dtype=np.complex128)
        amp[index] = 1.0
        return cls(amplitudes=amp, n_qubits=n_qubits)


@dataclass(frozen=True)
class Excitation:
    annihilate: Tuple[int, ...]  # occupied spin orbitals, ascending
    create: Tuple[int, ...]  # virtual spin orbitals, ascending


def uccsd_excitations(n_electrons, n_orbitals):
    """Deterministic excitation list: all spin-conserving doubles (lexicographic),
    then all singles (lexicographic)."""
    nq = 2 * n_orbitals
    occ = list(range(n_electrons))
    vir = list(range(n_electrons, nq))
    doubles = []
    for ii, i in enumerate(occ):
        for j in occ[ii + 1:]:
            for ai, a in enumerate(vir):
                for b in vir[ai + 1:]:
                    if (i + j) % 2 == (a + b) % 2 and (i % 2 + j % 2) == (a % 2 + b % 2):
                        doubles.append(Excitation(annihilate=(i, j), create=(a, b)))
    singles = [Excitation(annihilate=(i,), create=(a,))
               for i in occ for a in vir if i % 2 == a % 2]
    return doubles + singles


@dataclass
class UCCSDAnsatz:
    n_electrons: int
    n_orbitals: int
    excitations: List[Excitation] = field(default_factory=list)
    _tables: Optional[list] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.excitations:
            self.excitations = uccsd_excitations(self.n_electrons, self.n_orbitals)

    @property
    def n_qubits(self):
        return 2 * self.n_orbitals

    @property
    def n_parameters(self):
        return len(self.excitations)

    @property
    def reference_index(self):
        """Hartree-Fock determinant: lowest n_electrons spin orbitals filled."""
        return (1 << self.n_electrons) - 1

    def reference_state(self):
        return Statevector.computational_basis(self.n_qubits, self.reference_index)

    def tables(self):
        if self._tables is None:
            self._tables = [_excitation_table(ex, self.n_qubits)
                            for ex in self.excitations]
        return self._tables


def _parity_below(idx, orbital):
    """(-1)^(number of occupied spin orbitals below `orbital`) as +-1."""
    mask = (np.int64(1) << orbital) - 1
    return 1 - 2 * (np.bitwise_count(idx & mask) & 1).astype(np.int64)


def _excitation_table(ex, n_qubits):
    """(src, tgt, sign) for T = a+_create... a_annihilate...; src runs over all
    basis states with the annihilated orbitals filled and created ones empty."""
    dim = 1 << n_qubits
    idx = np.arange(dim, dtype=np.int64)
    occ_mask = np.int64(0)
    for i in ex.annihilate:
        occ_mask |= np.int64(1) << i
    vir_mask = np.int64(0)
    for a in ex.create:
        vir_mask |= np.int64(1) << a
    src = idx[((idx & occ_mask) == occ_mask) & ((idx & vir_mask) == 0)]
    sign = np.ones(len(src), dtype=np.int64)
    state = src.copy()
    # apply annihilations descending then creations ascending, tracking parity
    for i in sorted(ex.annihilate, reverse=True):
        sign *= _parity_below(state, i)
        state ^= np.int64(1) << i
    for a in sorted(ex.create):
        sign *= _parity_below(state, a)
        state ^= np.int64(1) << a
    return src, state, sign.astype(np.float64)


def _rotate_pairs(amp, table, theta):
    src, tgt, sign = table
    ca, sa = np.cos(theta), np.sin(theta)
    a_src = amp[src]
    a_tgt = amp[tgt]
    amp[src] = ca * a_src - sa * sign * a_tgt
    amp[tgt] = ca * a_tgt + sa * sign * a_src


def _apply_generator(amp, table):
    """(T - T+)|psi> restricted to the coupled pairs."""
    src, tgt, sign = table
    out = np.zeros_like(amp)
    out[tgt] = sign * amp[src]
    out[src] = -sign * amp[tgt]
    return out


def prepare_state(ansatz: UCCSDAnsatz, theta) -> Statevector:
    """|psi> = prod_k exp(theta_k (T_k - T_k+)) |HF>, applied in list order."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (ansatz.n_parameters,):
        raise ValueError("theta length does not match the excitation list")
    if not np.all(np.isfinite(theta)):
        raise ValueError("non-finite parameters")
    psi = ansatz.reference_state()
    amp = psi.amplitudes
    for table, th in zip(ansatz.tables(), theta):
        if th != 0.0:
            _rotate_pairs(amp, table, th)
    return psi


def expectation(ham: PauliHamiltonian, psi: Statevector) -> float:
    """Exact <psi|H|psi> in hartree (no sampling noise)."""
    if ham.n_qubits != psi.n_qubits:
        raise ValueError("Hamiltonian and state dimensions differ")
    return expectation_value(ham, psi.amplitudes)


def energy_and_gradient(ham, ansatz, theta):
    """Analytic gradient via reverse sweep over the exponential product."""
    theta = np.asarray(theta, dtype=float)
    psi = prepare_state(ansatz, theta)
    amp = psi.amplitudes
    phi = apply_hamiltonian(ham, amp)
    energy = float(np.vdot(amp, phi).real)
    grad = np.zeros_like(theta)
    tables = ansatz.tables()
    work = amp.copy()
    for k in range(len(theta) - 1, -1, -1):
        gpsi = _apply_generator(work, tables[k])
        grad[k] = 2.0 * float(np.vdot(phi, gpsi).real)
        if theta[k] != 0.0:
            _rotate_pairs(work, tables[k], -theta[k])
            _rotate_pairs(phi, tables[k], -theta[k])
    return energy, grad, psi


@dataclass
class VQEResult:
    theta: np.ndarray
    energy: float
    gradient_norm: float
    iterations: int
    converged: bool
    history: List[Tuple[int, float, float]] = field(default_factory=list)


def optimize(ham: PauliHamiltonian, ansatz: UCCSDAnsatz, theta0=None,
             gtol=GRAD_TOL, max_iter=MAX_OPT_ITER, restart_seed=7) -> VQEResult:
    """Quasi-Newton minimization of <H(theta)> with analytic gradients.

    Starts from theta = 0 (the reference determinant) unless warm-started;
    one perturbed restart is attempted if the optimizer stalls above gtol.
    """
    if theta0 is None:
        theta0 = np.zeros(ansatz.n_parameters)
    theta0 = np.asarray(theta0, dtype=float)
    history = []

    def fun(th):
        e, g, _ = energy_and_gradient(ham, ansatz, th)
        history.append((len(history), e, float(np.max(np.absolute(g)) if len(g) else 0.0)))
        return e, g

    if ansatz.n_parameters == 0:
        e = expectation(ham, ansatz.reference_state())
        return VQEResult(theta=theta0, energy=e, gradient_norm=0.0,
                         iterations=0, converged=True, history=[(0, e, 0.0)])

    res = minimize(fun, theta0, jac=True, method="BFGS",
                   options={"gtol": gtol, "maxiter": max_iter})
    gnorm = float(np.max(np.absolute(res.jac)))
    if gnorm > gtol:
        rng = np.random.default_rng(restart_seed)
        res2 = minimize(fun, res.x + rng.normal(scale=1e-3, size=res.x.shape),
                        jac=True, method="BFGS",
                        options={"gtol": gtol, "maxiter": max_iter})
        if res2.fun <= res.fun:
            res = res2
            gnorm = float(np.max(np.absolute(res.jac)))
    return VQEResult(theta=res.x, energy=float(res.fun), gradient_norm=gnorm,
                     iterations=int(res.nit), converged=bool(gnorm <= gtol),
                     history=history)


def measure_1rdm(psi: Statevector, n_orbitals) -> np.ndarray:
    """Spin-summed active-space 1-RDM, gamma_pq = sum_s <a+_ps a_qs>,
    evaluated exactly through the Jordan-Wigner bitstring action."""
    amp = psi.amplitudes
    dim = len(amp)
    idx = np.arange(dim, dtype=np.int64)
    prob = np.absolute(amp) ** 2
    gamma = np.zeros((n_orbitals, n_orbitals), dtype=np.complex128)
    for p in range(n_orbitals):
        for sigma in (0, 1):
            bit = np.int64(1) << (2 * p + sigma)
            gamma[p, p] += np.sum(prob[(idx & bit) != 0])
    for p in range(n_orbitals):
        for q in range(n_orbitals):
            if p == q:
                continue
            for sigma in (0, 1):
                P = 2 * p + sigma
                Q = 2 * q + sigma
                bp = np.int64(1) << P
                bq = np.int64(1) << Q
                src = idx[((idx & bq) != 0) & ((idx & bp) == 0)]
                sign = _parity_below(src, Q)
                mid = src ^ bq
                sign = sign * _parity_below(mid, P)
                tgt = mid ^ bp
                gamma[p, q] += np.sum(np.conj(amp[tgt]) * sign * amp[src])
    if np.max(np.absolute(gamma.imag)) > 1e-10:
        raise ValueError("1-RDM has a non-real residue")
    g = gamma.real
    return 0.5 * (g + g.T)
