"""Unit conversions. Everything inside the package is in Hartree atomic units."""

import numpy as np

# CODATA 2018
BOHR_PER_ANGSTROM = 1.0 / 0.529177210903
ANGSTROM_PER_BOHR = 0.529177210903
HARTREE_PER_JOULE_MOL = 1.0 / 2625499.63948  # 1 Eh = 2625.49963948 kJ/mol
KBOLTZ_HARTREE = 3.166811563e-6  # k_B in Eh/K


def angstrom_to_bohr(x):
    return np.asarray(x, dtype=float) * BOHR_PER_ANGSTROM


def bohr_to_angstrom(x):
    return np.asarray(x, dtype=float) * ANGSTROM_PER_BOHR


def jmol_to_hartree(x):
    return float(x) * HARTREE_PER_JOULE_MOL


def beta_hartree(temperature_kelvin):
    """Inverse temperature 1/(k_B T) in 1/Eh."""
    return 1.0 / (KBOLTZ_HARTREE * temperature_kelvin)
