"""Solvated electronic structure: statevector VQE coupled self-consistently
to a 3D reference interaction site model of the solvent."""

__version__ = "0.1.0"
