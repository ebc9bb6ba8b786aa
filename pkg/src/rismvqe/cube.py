"""Gaussian-style volumetric cube files for grid fields."""

import numpy as np

from .model import ELEMENT_Z


def export_cube(field, grid, atoms, path, comment="solvent distribution"):
    """Write a scalar field in the standard volumetric cube text layout:
    two comment lines, atom count + origin, three axis records (bohr),
    atom records, then z-fastest values, six per line."""
    data = np.asarray(field, dtype=float).reshape(grid.shape)
    origin = np.array([grid.axis(d)[0] for d in range(3)])
    with open(path, "w") as fh:
        fh.write(f"{comment}\n")
        fh.write("scalar field on a uniform cubic grid (bohr)\n")
        fh.write(f"{len(atoms):5d} {origin[0]:12.6f} {origin[1]:12.6f}"
                 f" {origin[2]:12.6f}\n")
        for d in range(3):
            step = [0.0, 0.0, 0.0]
            step[d] = grid.spacing
            fh.write(f"{grid.n:5d} {step[0]:12.6f} {step[1]:12.6f}"
                     f" {step[2]:12.6f}\n")
        for a in atoms:
            p = a.position_bohr
            fh.write(f"{a.Z:5d} {float(a.Z):12.6f} {p[0]:12.6f} {p[1]:12.6f}"
                     f" {p[2]:12.6f}\n")
        flat = data.ravel(order="C")  # x slowest, z fastest
        for i0 in range(0, len(flat), 6):
            fh.write(" ".join(f"{v:13.5E}" for v in flat[i0:i0 + 6]) + "\n")


def read_cube(path):
    """Parse a cube file back into (field, origin, spacing, atom records)."""
    with open(path) as fh:
        fh.readline()
        fh.readline()
        parts = fh.readline().split()
        natoms = int(parts[0])
        origin = np.array([float(x) for x in parts[1:4]])
        ns = []
        steps = []
        for _ in range(3):
            parts = fh.readline().split()
            ns.append(int(parts[0]))
            steps.append([float(x) for x in parts[1:4]])
        atoms = []
        for _ in range(natoms):
            parts = fh.readline().split()
            atoms.append((int(parts[0]), np.array([float(x) for x in parts[2:5]])))
        values = []
        for line in fh:
            values.extend(float(v) for v in line.split())
    field = np.array(values).reshape(ns)
    spacing = np.array([steps[d][d] for d in range(3)])
    return field, origin, spacing, atoms


def element_of(Z):
    for sym, z in ELEMENT_Z.items():
        if z == Z:
            return sym
    return "X"
