"""Weighted Pauli-word Hamiltonians on up to 64 qubits.

Words are encoded symplectically as two integer bit masks (x, z):
qubit q carries X when bit q of x is set, Z for z, Y for both.  A word
acts on a computational basis state as

    P |j> = i^{n_Y} (-1)^{popcount(j & z)} |j XOR x>.

Hermitian Hamiltonians with real coefficients contain only even-Y words,
so matrix actions stay real.  The identity coefficient is stored apart
from the word list and is excluded from the L1 norm.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit, prange

_CHARS = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_MASKS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}


def word_to_string(x, z, n_qubits):
    """Qubit 0 is the leftmost character."""
    return "".join(
        _CHARS[((int(x) >> q) & 1, (int(z) >> q) & 1)] for q in range(n_qubits)
    )


def string_to_word(s):
    x = z = 0
    for q, ch in enumerate(s):
        bx, bz = _MASKS[ch]
        x |= bx << q
        z |= bz << q
    return x, z


@dataclass
class PauliHamiltonian:
    """Real-coefficient Pauli-word sum; identity kept separately."""

    n_qubits: int
    x: np.ndarray  # int64 masks, no identity entry
    z: np.ndarray
    coeffs: np.ndarray  # float64, hartree
    identity: float = 0.0
    _mat_cache: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int64)
        self.z = np.asarray(self.z, dtype=np.int64)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        ny = np.bitwise_count(self.x & self.z)
        if np.any(ny % 2):
            raise ValueError("odd-Y word with a real coefficient is non-hermitian")
        if len(self.x) > 1:
            order = np.lexsort((self.z, self.x))
            xs, zs = self.x[order], self.z[order]
            if np.any((xs[1:] == xs[:-1]) & (zs[1:] == zs[:-1])):
                raise ValueError("duplicate Pauli words")

    @property
    def n_terms(self):
        return len(self.coeffs)

    def l1(self):
        """Sum of |coefficient| over non-identity words."""
        return float(np.sum(np.absolute(self.coeffs)))

    def words(self):
        for xw, zw, c in zip(self.x, self.z, self.coeffs):
            yield word_to_string(xw, zw, self.n_qubits), float(c)

    def to_matrix(self):
        """Dense real matrix; guarded to 14 qubits."""
        if self.n_qubits > 14:
            raise ValueError("dense matrix limited to 14 qubits")
        dim = 1 << self.n_qubits
        M = np.zeros((dim, dim))
        idx = np.arange(dim, dtype=np.int64)
        M[idx, idx] = self.identity
        for xw, zw, c in zip(self.x, self.z, self.coeffs):
            ny = int(np.bitwise_count(np.int64(xw & zw)))
            sgn = c * (1.0 if ny % 4 == 0 else -1.0)
            par = 1.0 - 2.0 * (np.bitwise_count(idx & zw) & 1)
            np.add.at(M, (idx ^ xw, idx), sgn * par)
        return M

    def save_text(self, path):
        """One term per line: signed 12-decimal coefficient, then the word;
        the identity line is flagged with the word 'IDENTITY'."""
        with open(path, "w") as fh:
            fh.write(f"# qubits {self.n_qubits}  terms {self.n_terms}\n")
            fh.write(f"{self.identity:+.12f}  IDENTITY\n")
            for w, c in self.words():
                fh.write(f"{c:+.12f}  {w}\n")

    @classmethod
    def load_text(cls, path):
        n_qubits = None
        ident = 0.0
        xs, zs, cs = [], [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("#"):
                    n_qubits = int(line.split()[2])
                    continue
                if not line:
                    continue
                cstr, w = line.split()
                if w == "IDENTITY":
                    ident = float(cstr)
                    continue
                xw, zw = string_to_word(w)
                xs.append(xw)
                zs.append(zw)
                cs.append(float(cstr))
        return cls(n_qubits=n_qubits, x=np.array(xs, dtype=np.int64),
                   z=np.array(zs, dtype=np.int64),
                   coeffs=np.array(cs), identity=ident)


def merge_raw_terms(x, z, c, tol=0.0):
    """Sum coefficients of identical (x, z) pairs; drops |c| <= tol."""
    order = np.lexsort((z, x))
    x, z, c = x[order], z[order], c[order]
    if len(x) == 0:
        return x, z, c
    new = np.empty(len(x), dtype=bool)
    new[0] = True
    new[1:] = (x[1:] != x[:-1]) | (z[1:] != z[:-1])
    starts = np.flatnonzero(new)
    cs = np.add.reduceat(c, starts)
    xs, zs = x[starts], z[starts]
    keep = np.absolute(cs) > tol
    return xs[keep], zs[keep], cs[keep]


@njit(cache=True)
def _popcount64(v):
    # SWAR popcount; valid for non-negative int64 (masks use < 63 bits)
    v = v - ((v >> 1) & 0x5555555555555555)
    v = (v & 0x3333333333333333) + ((v >> 2) & 0x3333333333333333)
    v = (v + (v >> 4)) & 0x0F0F0F0F0F0F0F0F
    return (v * 0x0101010101010101) >> 56


@njit(cache=True, parallel=True)
def _apply_words_kernel(x, z, sc, psi, out):
    dim = psi.shape[0]
    nw = x.shape[0]
    for j in prange(dim):
        acc = complex(0.0, 0.0)
        for w in range(nw):
            src = j ^ x[w]
            par = _popcount64(src & z[w]) & 1
            if par:
                acc -= sc[w] * psi[src]
            else:
                acc += sc[w] * psi[src]
        out[j] = acc


def signed_coeffs(ham):
    """Coefficients with the i^{n_Y} factor folded in (even-Y words only)."""
    ny = np.bitwise_count(ham.x & ham.z)
    return np.where(ny % 4 == 0, ham.coeffs, -ham.coeffs)


def apply_hamiltonian(ham, psi):
    """H |psi> for a statevector of length 2^n_qubits."""
    dim = 1 << ham.n_qubits
    if psi.shape[0] != dim:
        raise ValueError("statevector dimension mismatch")
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    out = np.empty(dim, dtype=np.complex128)
    if ham.n_terms:
        _apply_words_kernel(ham.x, ham.z, signed_coeffs(ham), psi, out)
    else:
        out[:] = 0.0
    if ham.identity != 0.0:
        out += ham.identity * psi
    return out


def expectation_value(ham, psi, imag_tol=1e-10):
    """Exact <psi|H|psi>; raises if the imaginary residue exceeds imag_tol."""
    val = np.vdot(psi, apply_hamiltonian(ham, psi))
    if abs(val.imag) > imag_tol * max(1.0, abs(val.real)):
        raise ValueError(f"non-hermitian Hamiltonian: imaginary part {val.imag:.3e}")
    return float(val.real)
