"""Contracted Cartesian Gaussian basis sets.

Basis parameter files live in ``data/basis`` in a plain-text format:
element symbol on one line, then ``<TYPE> <nprim>`` headers (TYPE one of
S, P, SP, D) followed by one ``exponent coefficient [p-coefficient]`` row
per primitive, each element terminated by ``****``.  Functions are ordered
atom-major, shells in file order, Cartesian components within a shell as
s; px, py, pz; dxx, dxy, dxz, dyy, dyz, dzz.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_DATA_DIR = Path(__file__).parent / "data" / "basis"

BASIS_FILES = {
    "sto-3g": "sto-3g.dat",
    "6-31g": "6-31g.dat",
    "6-31g*": "6-31gs.dat",
}

# Cartesian component exponents (i, j, k) per angular momentum.
CARTESIAN_POWERS = {
    0: [(0, 0, 0)],
    1: [(1, 0, 0), (0, 1, 0), (0, 0, 1)],
    2: [(2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)],
}

_AM_FROM_LETTER = {"S": 0, "P": 1, "D": 2}


class BasisSetError(ValueError):
    pass


@dataclass(frozen=True)
class Shell:
    """One contracted shell: all Cartesian components sharing radial parts."""

    center: np.ndarray  # (3,) bohr
    am: int  # angular momentum, 0..2
    exponents: np.ndarray
    coefficients: np.ndarray  # raw contraction coefficients from the data file
    atom_index: int

    @property
    def n_components(self):
        return len(CARTESIAN_POWERS[self.am])


@dataclass
class BasisSet:
    """Flattened per-function arrays consumed by the integral kernels."""

    shells: list
    centers: np.ndarray = field(init=False)  # (nbf, 3)
    powers: np.ndarray = field(init=False)  # (nbf, 3) int64
    prim_offsets: np.ndarray = field(init=False)  # (nbf + 1,)
    prim_exps: np.ndarray = field(init=False)
    prim_coefs: np.ndarray = field(init=False)  # normalization folded in
    function_shell: np.ndarray = field(init=False)  # shell index per function

    def __post_init__(self):
        centers, powers, offs, exps, coefs, fshell = [], [], [0], [], [], []
        for ishell, sh in enumerate(self.shells):
            for lmn in CARTESIAN_POWERS[sh.am]:
                c = _normalized_coefficients(sh.exponents, sh.coefficients, lmn)
                centers.append(sh.center)
                powers.append(lmn)
                exps.extend(sh.exponents)
                coefs.extend(c)
                offs.append(offs[-1] + len(sh.exponents))
                fshell.append(ishell)
        self.centers = np.array(centers, dtype=float)
        self.powers = np.array(powers, dtype=np.int64)
        self.prim_offsets = np.array(offs, dtype=np.int64)
        self.prim_exps = np.array(exps, dtype=float)
        self.prim_coefs = np.array(coefs, dtype=float)
        self.function_shell = np.array(fshell, dtype=np.int64)

    @property
    def n_functions(self):
        return len(self.powers)


def _double_factorial(n):
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def _primitive_norm(alpha, lmn):
    l, m, n = lmn
    L = l + m + n
    pref = (2.0 * alpha / np.pi) ** 0.75 * (4.0 * alpha) ** (L / 2.0)
    den = np.sqrt(
        _double_factorial(2 * l - 1)
        * _double_factorial(2 * m - 1)
        * _double_factorial(2 * n - 1)
    )
    return pref / den


def _normalized_coefficients(exps, coefs, lmn):
    """Fold primitive norms into coefficients and scale to unit self-overlap."""
    l, m, n = lmn
    L = l + m + n
    c = np.array([cc * _primitive_norm(a, lmn) for a, cc in zip(exps, coefs)])
    # analytic self-overlap of the contracted function
    fact = (
        _double_factorial(2 * l - 1)
        * _double_factorial(2 * m - 1)
        * _double_factorial(2 * n - 1)
    )
    s = 0.0
    for ci, ai in zip(c, exps):
        for cj, aj in zip(c, exps):
            p = ai + aj
            s += ci * cj * fact / (2.0 * p) ** L * (np.pi / p) ** 1.5
    return c / np.sqrt(s)


def _parse_basis_file(path):
    """Return {element: [(am, exps, coefs), ...]}; SP rows split into S and P."""
    elements = {}
    sym = None
    shells = []
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    i = 0
    while i < len(lines):
        ln = lines[i]
        i += 1
        if not ln or ln.startswith("!"):
            continue
        if ln == "****":
            if sym is not None:
                elements[sym] = shells
            sym, shells = None, []
            continue
        if sym is None:
            sym = ln.split()[0]
            continue
        kind, nprim = ln.split()
        nprim = int(nprim)
        rows = [lines[i + k].split() for k in range(nprim)]
        i += nprim
        exps = np.array([float(r[0]) for r in rows])
        if kind.upper() == "SP":
            s_c = np.array([float(r[1]) for r in rows])
            p_c = np.array([float(r[2]) for r in rows])
            shells.append((0, exps, s_c))
            shells.append((1, exps, p_c))
        else:
            am = _AM_FROM_LETTER[kind.upper()]
            coefs = np.array([float(r[1]) for r in rows])
            shells.append((am, exps, coefs))
    return elements


_BASIS_CACHE = {}


def load_basis_data(basis_name):
    key = basis_name.lower()
    if key not in BASIS_FILES:
        raise BasisSetError(
            f"unknown basis '{basis_name}'; available: {sorted(BASIS_FILES)}"
        )
    if key not in _BASIS_CACHE:
        _BASIS_CACHE[key] = _parse_basis_file(_DATA_DIR / BASIS_FILES[key])
    return _BASIS_CACHE[key]


def build_basis(atoms, basis_name):
    """Construct a BasisSet for a geometry (positions already in bohr).

    ``atoms`` is any sequence with ``.element`` and ``.position_bohr``.
    """
    data = load_basis_data(basis_name)
    shells = []
    for idx, atom in enumerate(atoms):
        if atom.element not in data:
            raise BasisSetError(
                f"basis '{basis_name}' has no parameters for element {atom.element}"
            )
        for am, exps, coefs in data[atom.element]:
            shells.append(
                Shell(
                    center=np.asarray(atom.position_bohr, dtype=float),
                    am=am,
                    exponents=exps.copy(),
                    coefficients=coefs.copy(),
                    atom_index=idx,
                )
            )
    return BasisSet(shells=shells)
