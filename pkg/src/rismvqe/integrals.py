"""One- and two-electron integrals over contracted Cartesian Gaussians.

McMurchie-Davidson Hermite expansion throughout: the same (E, R) machinery
serves overlap/kinetic, nuclear attraction, arbitrary point-charge
operators, electrostatic-potential evaluation, and electron repulsion.
Hot paths (ERI quartets, grid-point sweeps) are numba-compiled; point
sweeps are processed in fixed-size chunks reduced in chunk order so grid
results are reproducible bit-for-bit.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit, prange

log = logging.getLogger(__name__)

_POINT_CHUNK = 4096
_PAIR_SCREEN = 1e-15
_ERI_BYTE_CAP = 8 * 1024**3


class IntegralError(RuntimeError):
    pass


@dataclass
class IntegralTensors:
    S: np.ndarray
    T: np.ndarray
    V_nuc: np.ndarray
    E_nn: float
    eri: Optional[np.ndarray] = None

    @property
    def h_core(self):
        return self.T + self.V_nuc


@njit(cache=True)
def boys_array(mmax, T, out):
    """Boys function F_0..F_mmax(T): series + downward recursion for small T,
    asymptotic + upward recursion for large T."""
    if T < 1e-13:
        for m in range(mmax + 1):
            out[m] = 1.0 / (2.0 * m + 1.0)
    elif T <= 35.0:
        emt = math.exp(-T)
        denom = 2.0 * mmax + 1.0
        term = 1.0 / denom
        s = term
        while True:
            denom += 2.0
            term *= 2.0 * T / denom
            s += term
            if term < 1e-17 * s:
                break
        out[mmax] = emt * s
        for m in range(mmax - 1, -1, -1):
            out[m] = (2.0 * T * out[m + 1] + emt) / (2.0 * m + 1.0)
    else:
        emt = math.exp(-T)
        out[0] = 0.5 * math.sqrt(math.pi / T)
        for m in range(mmax):
            out[m + 1] = ((2.0 * m + 1.0) * out[m] - emt) / (2.0 * T)


def boys(m, T):
    buf = np.empty(m + 1)
    boys_array(m, float(T), buf)
    return buf[m]


@njit(cache=True)
def hermite_table(l1, l2, a, b, AB):
    """Hermite expansion coefficients E[i, j, t] for one Cartesian direction."""
    p = a + b
    xpa = -b / p * AB
    xpb = a / p * AB
    E = np.zeros((l1 + 1, l2 + 1, l1 + l2 + 2))
    E[0, 0, 0] = math.exp(-a * b / p * AB * AB)
    for i in range(l1):
        for t in range(i + 2):
            v = xpa * E[i, 0, t] + (t + 1) * E[i, 0, t + 1]
            if t > 0:
                v += E[i, 0, t - 1] / (2.0 * p)
            E[i + 1, 0, t] = v
    for i in range(l1 + 1):
        for j in range(l2):
            for t in range(i + j + 2):
                v = xpb * E[i, j, t] + (t + 1) * E[i, j, t + 1]
                if t > 0:
                    v += E[i, j, t - 1] / (2.0 * p)
                E[i, j + 1, t] = v
    return E


@njit(cache=True)
def _hermite_coulomb(Lx, Ly, Lz, p, PCx, PCy, PCz, fbuf, rbuf):
    """Fill rbuf[0, t, u, v] with R_tuv(p, PC) for t<=Lx, u<=Ly, v<=Lz."""
    L = Lx + Ly + Lz
    T = p * (PCx * PCx + PCy * PCy + PCz * PCz)
    boys_array(L, T, fbuf)
    m2p = 1.0
    for n in range(L + 1):
        rbuf[n, 0, 0, 0] = m2p * fbuf[n]
        m2p *= -2.0 * p
    for n in range(L - 1, -1, -1):
        for t in range(min(L - n, Lx) + 1):
            for u in range(min(L - n - t, Ly) + 1):
                for v in range(min(L - n - t - u, Lz) + 1):
                    if t + u + v == 0:
                        continue
                    if t > 0:
                        val = PCx * rbuf[n + 1, t - 1, u, v]
                        if t > 1:
                            val += (t - 1) * rbuf[n + 1, t - 2, u, v]
                    elif u > 0:
                        val = PCy * rbuf[n + 1, t, u - 1, v]
                        if u > 1:
                            val += (u - 1) * rbuf[n + 1, t, u - 2, v]
                    else:
                        val = PCz * rbuf[n + 1, t, u, v - 1]
                        if v > 1:
                            val += (v - 1) * rbuf[n + 1, t, u, v - 2]
                    rbuf[n, t, u, v] = val


class PairData:
    """Hermite expansion data for all function pairs mu <= nu, flattened."""

    def __init__(self, basis):
        nbf = basis.n_functions
        pow_ = basis.powers
        ctr = basis.centers
        offs = basis.prim_offsets
        exps = basis.prim_exps
        coefs = basis.prim_coefs

        pair_idx, pair_L, pp_off = [], [], [0]
        pp_p, pp_P, pp_coef, pp_e_off = [], [], [], []
        e_data = []
        for mu in range(nbf):
            for nu in range(mu, nbf):
                A, B = ctr[mu], ctr[nu]
                la = pow_[mu]
                lb = pow_[nu]
                L = la + lb
                rab2 = float(np.dot(A - B, A - B))
                for i in range(offs[mu], offs[mu + 1]):
                    for j in range(offs[nu], offs[nu + 1]):
                        a, b = exps[i], exps[j]
                        c = coefs[i] * coefs[j]
                        if abs(c) * math.exp(-a * b / (a + b) * rab2) < _PAIR_SCREEN:
                            continue
                        ex = hermite_table(la[0], lb[0], a, b, A[0] - B[0])
                        ey = hermite_table(la[1], lb[1], a, b, A[1] - B[1])
                        ez = hermite_table(la[2], lb[2], a, b, A[2] - B[2])
                        pp_p.append(a + b)
                        pp_P.append((a * A + b * B) / (a + b))
                        pp_coef.append(c)
                        pp_e_off.append(len(e_data))
                        e_data.extend(ex[la[0], lb[0], : L[0] + 1])
                        e_data.extend(ey[la[1], lb[1], : L[1] + 1])
                        e_data.extend(ez[la[2], lb[2], : L[2] + 1])
                pair_idx.append((mu, nu))
                pair_L.append(L)
                pp_off.append(len(pp_p))

        self.nbf = nbf
        self.pair_idx = np.array(pair_idx, dtype=np.int64)
        self.pair_L = np.array(pair_L, dtype=np.int64)
        self.pp_off = np.array(pp_off, dtype=np.int64)
        self.pp_p = np.array(pp_p, dtype=float)
        self.pp_P = np.array(pp_P, dtype=float).reshape(len(pp_p), 3)
        self.pp_coef = np.array(pp_coef, dtype=float)
        self.pp_e_off = np.array(pp_e_off, dtype=np.int64)
        self.e_data = np.array(e_data, dtype=float)
        self.Lmax_axis = int(self.pair_L.max()) if len(pair_L) else 0
        self.Lmax_tot = int(self.pair_L.sum(axis=1).max()) if len(pair_L) else 0


_PAIR_CACHE = "_rismvqe_pair_data"


def pair_data(basis):
    cached = getattr(basis, _PAIR_CACHE, None)
    if cached is None:
        cached = PairData(basis)
        setattr(basis, _PAIR_CACHE, cached)
    return cached


@njit(cache=True)
def _pair_point(pair, px, py, pz, pair_L, pp_off, pp_p, pp_P, pp_coef,
                pp_e_off, e_data, fbuf, rbuf):
    """<mu| 1/|r - C| |nu> for one pair at one point C."""
    Lx = pair_L[pair, 0]
    Ly = pair_L[pair, 1]
    Lz = pair_L[pair, 2]
    acc = 0.0
    for k in range(pp_off[pair], pp_off[pair + 1]):
        p = pp_p[k]
        PCx = pp_P[k, 0] - px
        PCy = pp_P[k, 1] - py
        PCz = pp_P[k, 2] - pz
        _hermite_coulomb(Lx, Ly, Lz, p, PCx, PCy, PCz, fbuf, rbuf)
        e0 = pp_e_off[k]
        s = 0.0
        for t in range(Lx + 1):
            ext = e_data[e0 + t]
            for u in range(Ly + 1):
                eyu = e_data[e0 + Lx + 1 + u]
                for v in range(Lz + 1):
                    s += ext * eyu * e_data[e0 + Lx + 1 + Ly + 1 + v] * rbuf[0, t, u, v]
        acc += pp_coef[k] * (2.0 * math.pi / p) * s
    return acc


@njit(cache=True, parallel=True)
def _point_charge_partials(points, charges, chunk, pair_L, pp_off, pp_p, pp_P,
                           pp_coef, pp_e_off, e_data, lmax_axis, lmax_tot,
                           partial):
    npoints = points.shape[0]
    npairs = pair_L.shape[0]
    nchunks = partial.shape[0]
    for c in prange(nchunks):
        fbuf = np.empty(lmax_tot + 1)
        rbuf = np.zeros((lmax_tot + 1, lmax_axis + 1, lmax_axis + 1, lmax_axis + 1))
        i1 = min(npoints, (c + 1) * chunk)
        for i in range(c * chunk, i1):
            q = charges[i]
            if q == 0.0:
                continue
            px, py, pz = points[i, 0], points[i, 1], points[i, 2]
            for pair in range(npairs):
                partial[c, pair] += q * _pair_point(
                    pair, px, py, pz, pair_L, pp_off, pp_p, pp_P, pp_coef,
                    pp_e_off, e_data, fbuf, rbuf)


@njit(cache=True, parallel=True)
def _esp_electron(points, chunk, pair_L, pp_off, pp_p, pp_P, pp_coef,
                  pp_e_off, e_data, dweight, lmax_axis, lmax_tot, out):
    npoints = points.shape[0]
    npairs = pair_L.shape[0]
    nchunks = (npoints + chunk - 1) // chunk
    for c in prange(nchunks):
        fbuf = np.empty(lmax_tot + 1)
        rbuf = np.zeros((lmax_tot + 1, lmax_axis + 1, lmax_axis + 1, lmax_axis + 1))
        i1 = min(npoints, (c + 1) * chunk)
        for i in range(c * chunk, i1):
            px, py, pz = points[i, 0], points[i, 1], points[i, 2]
            acc = 0.0
            for pair in range(npairs):
                w = dweight[pair]
                if w != 0.0:
                    acc += w * _pair_point(
                        pair, px, py, pz, pair_L, pp_off, pp_p, pp_P, pp_coef,
                        pp_e_off, e_data, fbuf, rbuf)
            out[i] = acc


@njit(cache=True, parallel=True)
def _eri_kernel(pair_idx, pair_L, pp_off, pp_p, pp_P, pp_coef, pp_e_off,
                e_data, lmax_axis, lmax_tot, out):
    npairs = pair_idx.shape[0]
    for ij in prange(npairs):
        fbuf = np.empty(2 * lmax_tot + 1)
        rbuf = np.zeros((2 * lmax_tot + 1, 2 * lmax_axis + 1,
                         2 * lmax_axis + 1, 2 * lmax_axis + 1))
        Lx1, Ly1, Lz1 = pair_L[ij, 0], pair_L[ij, 1], pair_L[ij, 2]
        for kl in range(ij, npairs):
            Lx2, Ly2, Lz2 = pair_L[kl, 0], pair_L[kl, 1], pair_L[kl, 2]
            val = 0.0
            for m in range(pp_off[ij], pp_off[ij + 1]):
                p = pp_p[m]
                e1 = pp_e_off[m]
                for n in range(pp_off[kl], pp_off[kl + 1]):
                    q = pp_p[n]
                    alpha = p * q / (p + q)
                    _hermite_coulomb(
                        Lx1 + Lx2, Ly1 + Ly2, Lz1 + Lz2, alpha,
                        pp_P[m, 0] - pp_P[n, 0], pp_P[m, 1] - pp_P[n, 1],
                        pp_P[m, 2] - pp_P[n, 2], fbuf, rbuf)
                    e2 = pp_e_off[n]
                    s = 0.0
                    for t2 in range(Lx2 + 1):
                        ex2 = e_data[e2 + t2]
                        for u2 in range(Ly2 + 1):
                            ey2 = e_data[e2 + Lx2 + 1 + u2]
                            for v2 in range(Lz2 + 1):
                                ez2 = e_data[e2 + Lx2 + 1 + Ly2 + 1 + v2]
                                sgn = -1.0 if (t2 + u2 + v2) % 2 else 1.0
                                w2 = sgn * ex2 * ey2 * ez2
                                for t1 in range(Lx1 + 1):
                                    ex1 = e_data[e1 + t1]
                                    for u1 in range(Ly1 + 1):
                                        ey1 = e_data[e1 + Lx1 + 1 + u1]
                                        for v1 in range(Lz1 + 1):
                                            s += (w2 * ex1 * ey1
                                                  * e_data[e1 + Lx1 + 1 + Ly1 + 1 + v1]
                                                  * rbuf[0, t1 + t2, u1 + u2, v1 + v2])
                    val += (pp_coef[m] * pp_coef[n]
                            * 2.0 * math.pi**2.5 / (p * q * math.sqrt(p + q)) * s)
            mu, nu = pair_idx[ij, 0], pair_idx[ij, 1]
            lam, sg = pair_idx[kl, 0], pair_idx[kl, 1]
            out[mu, nu, lam, sg] = val
            out[nu, mu, lam, sg] = val
            out[mu, nu, sg, lam] = val
            out[nu, mu, sg, lam] = val
            out[lam, sg, mu, nu] = val
            out[sg, lam, mu, nu] = val
            out[lam, sg, nu, mu] = val
            out[sg, lam, nu, mu] = val


def overlap_kinetic(basis):
    """Overlap and kinetic-energy matrices."""
    nbf = basis.n_functions
    S = np.zeros((nbf, nbf))
    T = np.zeros((nbf, nbf))
    pow_ = basis.powers
    ctr = basis.centers
    offs = basis.prim_offsets
    for mu in range(nbf):
        for nu in range(mu, nbf):
            A, B = ctr[mu], ctr[nu]
            la, lb = pow_[mu], pow_[nu]
            s_val = 0.0
            t_val = 0.0
            for i in range(offs[mu], offs[mu + 1]):
                for j in range(offs[nu], offs[nu + 1]):
                    a = basis.prim_exps[i]
                    b = basis.prim_exps[j]
                    c = basis.prim_coefs[i] * basis.prim_coefs[j]
                    p = a + b
                    norm1d = math.sqrt(math.pi / p)
                    sx = np.empty(3)
                    tx = np.empty(3)
                    for d in range(3):
                        tab = hermite_table(la[d], lb[d] + 2, a, b, A[d] - B[d])
                        ov = lambda jj: (tab[la[d], jj, 0] * norm1d if jj >= 0 else 0.0)
                        l2 = lb[d]
                        sx[d] = ov(l2)
                        tx[d] = -0.5 * (
                            l2 * (l2 - 1) * ov(l2 - 2)
                            - 2.0 * b * (2 * l2 + 1) * ov(l2)
                            + 4.0 * b * b * ov(l2 + 2)
                        )
                    s_val += c * sx[0] * sx[1] * sx[2]
                    t_val += c * (tx[0] * sx[1] * sx[2]
                                  + sx[0] * tx[1] * sx[2]
                                  + sx[0] * sx[1] * tx[2])
            S[mu, nu] = S[nu, mu] = s_val
            T[mu, nu] = T[nu, mu] = t_val
    return S, T


def point_charge_operator(basis, points, charges, chunk_size=_POINT_CHUNK):
    """One-electron matrix -sum_I q_I <mu| 1/|r-r_I| |nu>.

    Same kernel as nuclear attraction; supports ~1e6 points.  Points are
    processed in fixed chunks and reduced in chunk order (deterministic).
    """
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    charges = np.ascontiguousarray(charges, dtype=float).ravel()
    nbf = basis.n_functions
    if points.size == 0 or len(charges) == 0:
        return np.zeros((nbf, nbf))
    if points.shape[0] != len(charges):
        raise ValueError("points and charges must have matching lengths")
    if not np.all(np.isfinite(points)):
        raise ValueError("non-finite point coordinates")
    pd = pair_data(basis)
    nchunks = (points.shape[0] + chunk_size - 1) // chunk_size
    partial = np.zeros((nchunks, pd.pair_idx.shape[0]))
    _point_charge_partials(points, charges, chunk_size, pd.pair_L, pd.pp_off,
                           pd.pp_p, pd.pp_P, pd.pp_coef, pd.pp_e_off,
                           pd.e_data, pd.Lmax_axis, pd.Lmax_tot, partial)
    packed = partial.sum(axis=0)
    M = np.zeros((nbf, nbf))
    mu = pd.pair_idx[:, 0]
    nu = pd.pair_idx[:, 1]
    M[mu, nu] = -packed
    M[nu, mu] = -packed
    if not np.all(np.isfinite(M)):
        raise IntegralError("NaN/inf in point-charge operator")
    return M


def nuclear_attraction(basis, atoms):
    pos = np.array([a.position_bohr for a in atoms], dtype=float)
    z = np.array([a.Z for a in atoms], dtype=float)
    return point_charge_operator(basis, pos, z)


def nuclear_repulsion(atoms):
    e = 0.0
    for i, a in enumerate(atoms):
        for b in list(atoms)[i + 1:]:
            r = np.linalg.norm(np.asarray(a.position_bohr) - np.asarray(b.position_bohr))
            if r < 1e-10:
                raise IntegralError("coincident nuclei give singular repulsion")
            e += a.Z * b.Z / r
    return e


def core_integrals(basis, atoms):
    """S, T, V_nuc and the nuclear repulsion scalar, all in atomic units."""
    S, T = overlap_kinetic(basis)
    V = nuclear_attraction(basis, atoms)
    return IntegralTensors(S=S, T=T, V_nuc=V, E_nn=nuclear_repulsion(atoms))


def electron_repulsion(basis):
    """Full (mu nu | lambda sigma) tensor, chemists' notation, 8-fold symmetric."""
    nbf = basis.n_functions
    nbytes = nbf**4 * 8
    log.info("allocating ERI tensor: %d functions, %.1f MiB", nbf, nbytes / 2**20)
    if nbytes > _ERI_BYTE_CAP:
        raise IntegralError(
            f"ERI tensor of {nbf}^4 doubles ({nbytes / 2**30:.1f} GiB) exceeds cap")
    pd = pair_data(basis)
    out = np.zeros((nbf, nbf, nbf, nbf))
    _eri_kernel(pd.pair_idx, pd.pair_L, pd.pp_off, pd.pp_p, pd.pp_P,
                pd.pp_coef, pd.pp_e_off, pd.e_data, pd.Lmax_axis, pd.Lmax_tot,
                out)
    return out


def esp_at_points(basis, atoms, density, points, chunk_size=_POINT_CHUNK):
    """Electrostatic potential (nuclei minus electrons) at arbitrary points.

    A point sitting exactly on a nucleus gets +inf from the nuclear term;
    that is passed through for the caller to clamp.
    """
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    density = np.asarray(density, dtype=float)
    nbf = basis.n_functions
    if density.shape != (nbf, nbf):
        raise ValueError("density matrix dimension mismatch")
    pd = pair_data(basis)
    mu = pd.pair_idx[:, 0]
    nu = pd.pair_idx[:, 1]
    dweight = density[mu, nu] * np.where(mu == nu, 1.0, 2.0)
    elec = np.zeros(points.shape[0])
    _esp_electron(points, chunk_size, pd.pair_L, pd.pp_off, pd.pp_p, pd.pp_P,
                  pd.pp_coef, pd.pp_e_off, pd.e_data, dweight, pd.Lmax_axis,
                  pd.Lmax_tot, elec)
    nuc = np.zeros(points.shape[0])
    with np.errstate(divide="ignore"):
        for a in atoms:
            r = np.linalg.norm(points - np.asarray(a.position_bohr), axis=1)
            nuc += np.where(r > 0.0, a.Z / np.where(r > 0.0, r, 1.0), np.inf)
    return nuc - elec
