"""3D integral-equation solvent solver on a cubic grid.

Iterates the convolution h_v(k) = sum_v' c_v'(k) chi_v'v(|k|) against the
exponential/linear closure until the direct correlation functions are
self-consistent, then produces the excess chemical potential and the
solvent point-charge field that feeds back into the electronic problem.

Equivalent solvent sites (equal label/parameters) are folded into site
types with summed susceptibility rows, so water runs with two fields (O, H)
instead of three.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.fft import irfftn, rfftn
from scipy.interpolate import CubicSpline

from . import units
from .mdiis import MDIIS

LJ_CAP_KT = 1.0e3  # cap on beta*u_LJ at grid points inside the core
ESP_CAP_KT = 5.0e2  # cap on |beta * q_v * V_ESP|; only binds deep in the core
_FFT_WORKERS = 2


class RISM3DError(RuntimeError):
    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = residuals or []


@dataclass
class Grid3D:
    """Uniform cubic grid; points sit at half-integer offsets around the
    center so the box is symmetric and nuclei generically miss grid points."""

    n: int = 128
    spacing: float = 0.25 * units.BOHR_PER_ANGSTROM  # bohr
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))  # bohr

    def __post_init__(self):
        if self.n % 2 != 0 or self.n < 4:
            raise ValueError("grid points per axis must be even")
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")
        self.center = np.asarray(self.center, dtype=float)

    @classmethod
    def around(cls, positions_bohr, n, spacing_bohr):
        pos = np.atleast_2d(positions_bohr)
        c = 0.5 * (pos.min(axis=0) + pos.max(axis=0))
        return cls(n=n, spacing=spacing_bohr, center=c)

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @property
    def volume_element(self):
        return self.spacing**3

    def axis(self, d):
        return self.center[d] + (np.arange(self.n) - self.n / 2 + 0.5) * self.spacing

    def points(self):
        """(n^3, 3) cartesian coordinates, x slowest / z fastest."""
        ax = [self.axis(d) for d in range(3)]
        X, Y, Z = np.meshgrid(*ax, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def k_magnitudes(self):
        """|k| on the rfft layout (n, n, n//2 + 1)."""
        f = 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.spacing)
        fz = 2.0 * math.pi * np.fft.rfftfreq(self.n, d=self.spacing)
        return np.sqrt(f[:, None, None] ** 2 + f[None, :, None] ** 2
                       + fz[None, None, :] ** 2)


@dataclass
class SiteType:
    label: str
    sigma: float  # bohr
    epsilon: float  # hartree
    charge: float  # e
    density: float  # bohr^-3, includes site multiplicity


def site_types(solvent):
    """Fold equivalent solvent sites into types with multiplicity-weighted
    densities."""
    out = []
    for label, idxs in solvent.site_types():
        s = solvent.sites[idxs[0]]
        out.append(SiteType(
            label=label,
            sigma=s.sigma * units.BOHR_PER_ANGSTROM,
            epsilon=units.jmol_to_hartree(s.epsilon),
            charge=s.charge,
            density=len(idxs) * solvent.density_bohr))
    return out


class SusceptibilityOnGrid:
    """chi_{v'v}(|k|) folded to site types and interpolated (cubic) onto the
    3D reciprocal grid.  Raises if the 3D grid needs k beyond the table."""

    def __init__(self, suscept, solvent, grid):
        suscept.check_compatible(solvent)
        groups = solvent.site_types()
        nt = len(groups)
        kmag = grid.k_magnitudes()
        if kmag.max() > suscept.k_max():
            raise RISM3DError(
                f"3D grid needs k up to {kmag.max():.2f} bohr^-1 but the"
                f" susceptibility table stops at {suscept.k_max():.2f}")
        k1d = suscept.grid.k
        self.types = site_types(solvent)
        self.table = np.empty((nt, nt) + kmag.shape)
        for tp, (_, idx_in) in enumerate(groups):
            rep = idx_in[0]
            for tq, (_, idx_out) in enumerate(groups):
                prof = suscept.chi[:, [i for i in idx_out], rep].sum(axis=1)
                self.table[tq, tp] = CubicSpline(k1d, prof)(kmag)

    def convolve(self, c):
        """h_t(r) = sum_t' [c_t' * chi_t't](r) via periodic FFTs."""
        ck = rfftn(c, axes=(1, 2, 3), workers=_FFT_WORKERS)
        hk = np.einsum("ab...,a...->b...", self.table, ck)
        return irfftn(hk, s=c.shape[1:], axes=(1, 2, 3), workers=_FFT_WORKERS)


@dataclass
class SiteFields:
    """Per-site-type scalar fields on the grid. ``u`` is the bare interaction
    potential in hartree; the inverse-temperature scaling happens in the
    closure."""

    u: np.ndarray  # (nt, n, n, n)
    g: np.ndarray
    c: np.ndarray
    h: np.ndarray
    d: np.ndarray


@dataclass
class RISMSolution:
    fields: SiteFields
    delta_mu: float  # hartree
    charge_points: np.ndarray  # (N, 3) bohr
    charge_values: np.ndarray  # (N,) e
    total_charge: float
    residuals: List[float]
    iterations: int


def build_potential_parts(atoms, esp_field, solvent, grid, beta=None):
    """Lennard-Jones and electrostatic parts of the site potentials.

    Lorentz-Berthelot combination over solute atoms for the LJ sum (capped
    at 1e3 kT), q_v * V_ESP for the electrostatic term (capped at
    +-5e2 kT); both caps only bind inside the repulsive core where g
    vanishes anyway.
    """
    types = site_types(solvent)
    if beta is None:
        beta = solvent.beta
    pts = grid.points()
    esp = np.asarray(esp_field, dtype=float).reshape(grid.shape)
    nt = len(types)
    lj = np.zeros((nt,) + grid.shape)
    el = np.empty((nt,) + grid.shape)
    for atom in atoms:
        d2 = ((pts - np.asarray(atom.position_bohr)) ** 2).sum(axis=1)
        d2 = d2.reshape(grid.shape)
        for tv, t in enumerate(types):
            if atom.lj_epsilon <= 0.0 and t.epsilon <= 0.0:
                continue
            sig = 0.5 * (atom.lj_sigma_bohr + t.sigma)
            eps = math.sqrt(atom.lj_epsilon_hartree * t.epsilon)
            if eps == 0.0 or sig == 0.0:
                continue
            with np.errstate(divide="ignore", over="ignore"):
                x6 = np.where(d2 > 0.0, (sig * sig / np.where(d2 > 0, d2, 1.0)) ** 3,
                              np.inf)
                lj[tv] += 4.0 * eps * (x6 * x6 - x6)
    lj = np.minimum(lj, LJ_CAP_KT / beta)
    cap = ESP_CAP_KT / beta
    for tv, t in enumerate(types):
        el[tv] = np.clip(t.charge * esp, -cap, cap)
    return lj, el


def build_potential_grid(atoms, esp_field, solvent, grid, beta=None):
    """Total site potentials u_v(r) = LJ + q_v * V_ESP (see
    build_potential_parts for the capping rules)."""
    lj, el = build_potential_parts(atoms, esp_field, solvent, grid, beta=beta)
    return lj + el


def solve_3drism(u, chi_grid: SusceptibilityOnGrid, grid, beta,
                 tol=1e-6, max_iter=10000, c_init=None,
                 picard_damping=0.3, mdiis_subspace=10, mdiis_start=0.1,
                 charge_ramp=None):
    """Fixed point of closure + convolution for the given site potentials.

    Returns (SiteFields, residual history).  Cold starts on strongly charged
    solutes are stabilized by ramping the electrostatic part of the
    potential (``charge_ramp=(u_lj, u_elec)``) in stages; warm starts and
    uncharged potentials solve directly.  Sustained residual growth aborts
    with the history attached.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise RISM3DError("non-finite site potential (clamping failed?)")
    c = None if c_init is None else c_init.copy()
    residuals = []
    stages = [(u, tol)]
    if charge_ramp is not None and c is None:
        u_lj, u_el = charge_ramp
        if float(np.max(np.absolute(u_el))) > 0.0:
            stages = [(u_lj + lam * u_el, max(tol, pre))
                      for lam, pre in ((0.25, 1e-3), (0.5, 1e-3), (0.75, 1e-3))]
            stages.append((u, tol))
    fields = None
    for u_stage, stage_tol in stages:
        fields, hist = _solve_stage(u_stage, chi_grid, beta, stage_tol,
                                    max_iter, c, picard_damping,
                                    mdiis_subspace, mdiis_start)
        c = fields.c
        residuals.extend(hist)
    if not np.array_equal(stages[-1][0], u):
        raise AssertionError("final ramp stage must use the full potential")
    return fields, residuals


def _solve_stage(u, chi_grid, beta, tol, max_iter, c_init, picard_damping,
                 mdiis_subspace, mdiis_start):
    bu = beta * u
    c = np.zeros_like(u) if c_init is None else c_init.copy()
    mixer = MDIIS(subspace=mdiis_subspace, damping=0.5)
    residuals = []
    best = np.inf
    best_c = None
    stall = 0
    damping = picard_damping
    for it in range(1, max_iter + 1):
        h = chi_grid.convolve(c)
        t = h - c
        d = -bu + t
        g = np.where(d <= 0.0, np.exp(np.minimum(d, 0.0)), 1.0 + d)
        c_new = g - 1.0 - t
        res = c_new - c
        rnorm = float(np.max(np.absolute(res)))
        residuals.append(rnorm)
        if not math.isfinite(rnorm):
            raise RISM3DError("3D solver diverged (non-finite residual)", residuals)
        if rnorm < tol:
            c = c_new
            break
        if rnorm < best:
            best = rnorm
            best_c = c.copy()
            stall = 0
        else:
            stall += 1
            if stall >= 20:
                if damping > 0.02:
                    # back off: restart from the best iterate, damp harder
                    damping *= 0.5
                    c = best_c.copy()
                    mixer.reset()
                    stall = 0
                    continue
                raise RISM3DError(
                    f"3D solver diverging: residual {rnorm:.3e} above best"
                    f" {best:.3e} for 20 steps at minimum damping", residuals)
        if rnorm > mdiis_start:
            mixer.reset()
            c = c + damping * res
        else:
            mixer.push(c.ravel(), res.ravel())
            c = mixer.extrapolate().reshape(c.shape)
    else:
        raise RISM3DError(
            f"3D solver not converged in {max_iter} iterations"
            f" (residual {residuals[-1]:.3e})", residuals)

    h = chi_grid.convolve(c)
    t = h - c
    d = -bu + t
    g = np.where(d <= 0.0, np.exp(np.minimum(d, 0.0)), 1.0 + d)
    fields = SiteFields(u=u, g=g, c=c, h=g - 1.0, d=d)
    return fields, residuals


def closure_residual(fields, chi_grid, beta):
    """Re-evaluate the fixed-point residual of converged fields from scratch."""
    h = chi_grid.convolve(fields.c)
    t = h - fields.c
    d = -beta * fields.u + t
    g = np.where(d <= 0.0, np.exp(np.minimum(d, 0.0)), 1.0 + d)
    return float(np.max(np.absolute(g - 1.0 - t - fields.c)))


def excess_chemical_potential(fields, types, grid, beta):
    """Closure-consistent free-energy functional, in hartree:
    dmu = kT sum_v rho_v sum_r [h^2/2 (h<0) - c - hc/2] dV."""
    dv = grid.volume_element
    total = 0.0
    for tv, t in enumerate(types):
        h = fields.h[tv]
        c = fields.c[tv]
        term = 0.5 * h * h * (h < 0.0) - c - 0.5 * h * c
        total += t.density * float(term.sum()) * dv
    return total / beta


def solvent_point_charges(fields, types, grid, threshold=1e-7):
    """q_I = dV * sum_v rho_v q_v g_v(r_I), dropping |q| < threshold."""
    dv = grid.volume_element
    q = np.zeros(grid.shape)
    for tv, t in enumerate(types):
        q += t.density * t.charge * fields.g[tv]
    q = (q * dv).ravel()
    if math.isinf(threshold):
        keep = np.zeros(len(q), dtype=bool)
    else:
        keep = np.absolute(q) >= threshold
    pts = grid.points()[keep]
    vals = q[keep]
    return pts, vals, float(q.sum())


def binding_energy(fields, types, grid):
    """Distribution-weighted solute-solvent interaction integral,
    E_bind = sum_v rho_v sum_r g_v(r) u_v(r) dV, in hartree."""
    dv = grid.volume_element
    e = 0.0
    for tv, t in enumerate(types):
        e += t.density * float((fields.g[tv] * fields.u[tv]).sum()) * dv
    return e
