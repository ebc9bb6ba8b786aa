"""Domain types: solute atoms, solvent models, active spaces, run configuration.

Inputs use angstrom / J mol^-1 / kelvin; everything downstream runs in
atomic units via the ``*_bohr`` / ``*_hartree`` accessors, so unit
normalization happens once at this boundary and is idempotent.
"""

import hashlib
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import units
from .basis import BASIS_FILES, load_basis_data

_SOLVENT_DIR = Path(__file__).parent / "data" / "solvents"

ELEMENT_Z = {
    "H": 1, "He": 2, "Li": 3, "Be": 4, "B": 5, "C": 6, "N": 7, "O": 8,
    "F": 9, "Ne": 10, "Na": 11, "Mg": 12, "Al": 13, "Si": 14, "P": 15,
    "S": 16, "Cl": 17, "Ar": 18, "K": 19, "Ca": 20,
}


class ConfigError(ValueError):
    pass


@dataclass
class Atom:
    """Solute atom. Position in angstrom; LJ sigma in angstrom, epsilon in J/mol.

    Solute electrostatics enter the solvent problem through the ESP, so
    atoms carry no fixed point charge.
    """

    element: str
    position: np.ndarray
    lj_sigma: float = 0.0
    lj_epsilon: float = 0.0

    def __post_init__(self):
        if self.element not in ELEMENT_Z:
            raise ConfigError(f"unknown element '{self.element}'")
        self.position = np.asarray(self.position, dtype=float)
        if self.position.shape != (3,):
            raise ConfigError("atom position must be a 3-vector")
        if self.lj_sigma < 0 or self.lj_epsilon < 0:
            raise ConfigError("LJ parameters must be non-negative")

    @property
    def Z(self):
        return ELEMENT_Z[self.element]

    @property
    def position_bohr(self):
        return self.position * units.BOHR_PER_ANGSTROM

    @property
    def lj_sigma_bohr(self):
        return self.lj_sigma * units.BOHR_PER_ANGSTROM

    @property
    def lj_epsilon_hartree(self):
        return self.lj_epsilon * units.HARTREE_PER_JOULE_MOL


@dataclass
class SolventSite:
    label: str
    sigma: float  # angstrom
    epsilon: float  # J/mol
    charge: float  # e
    position: np.ndarray  # angstrom, rigid molecular frame

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)


@dataclass
class SolventModel:
    """Rigid multi-site solvent: site parameters, number density, temperature."""

    name: str
    sites: List[SolventSite]
    density: float  # molecules / angstrom^3 (= per-site density of each site)
    temperature: float  # kelvin

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("solvent temperature must be positive")
        if self.density <= 0:
            raise ConfigError("solvent density must be positive")
        total_q = sum(s.charge for s in self.sites)
        if abs(total_q) > 1e-8:
            raise ConfigError(f"solvent net charge {total_q:+.3e} != 0")

    @property
    def n_sites(self):
        return len(self.sites)

    @property
    def beta(self):
        """1/(k_B T) in 1/hartree."""
        return units.beta_hartree(self.temperature)

    @property
    def density_bohr(self):
        return self.density / units.BOHR_PER_ANGSTROM**3

    def site_distances_bohr(self):
        """Pairwise intramolecular distances, bohr."""
        pos = np.array([s.position for s in self.sites]) * units.BOHR_PER_ANGSTROM
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        return d

    def site_types(self):
        """Group equivalent sites: list of (label, site indices). Sites sharing
        a label must share LJ parameters and charge."""
        order = []
        groups = {}
        for i, s in enumerate(self.sites):
            if s.label not in groups:
                groups[s.label] = []
                order.append(s.label)
            ref = self.sites[groups[s.label][0]] if groups[s.label] else s
            if (abs(ref.sigma - s.sigma) > 1e-12 or abs(ref.epsilon - s.epsilon) > 1e-12
                    or abs(ref.charge - s.charge) > 1e-12):
                raise ConfigError(f"sites labeled '{s.label}' have unequal parameters")
            groups[s.label].append(i)
        return [(lbl, groups[lbl]) for lbl in order]

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(f"{self.name}|{self.temperature:.10g}|{self.density:.10g}".encode())
        for s in self.sites:
            h.update(f"|{s.label},{s.sigma:.10g},{s.epsilon:.10g},{s.charge:.10g},"
                     f"{s.position[0]:.10g},{s.position[1]:.10g},{s.position[2]:.10g}".encode())
        return h.hexdigest()[:16]


def load_solvent_model(name_or_path):
    """Load a solvent model from a bundled name or a TOML file path."""
    p = Path(str(name_or_path))
    if not p.exists():
        p = _SOLVENT_DIR / f"{str(name_or_path).replace('-', '_')}.toml"
    if not p.exists():
        bundled = sorted(f.stem for f in _SOLVENT_DIR.glob("*.toml"))
        raise ConfigError(f"no solvent model '{name_or_path}' (bundled: {bundled})")
    with open(p, "rb") as fh:
        raw = tomllib.load(fh)
    sites = [SolventSite(label=s["label"], sigma=float(s["sigma"]),
                         epsilon=float(s["epsilon"]), charge=float(s["charge"]),
                         position=np.array(s["position"], dtype=float))
             for s in raw["site"]]
    return SolventModel(name=raw["name"], sites=sites,
                        density=float(raw["density"]),
                        temperature=float(raw["temperature"]))


@dataclass
class ActiveSpaceSpec:
    """(m electrons, n spatial orbitals) plus the orbital selection rule."""

    n_electrons: int
    n_orbitals: int
    selection: Union[str, Sequence[int]] = "canonical-window"

    def __post_init__(self):
        if not (0 < self.n_electrons <= 2 * self.n_orbitals):
            raise ConfigError(
                f"active space ({self.n_electrons}e, {self.n_orbitals}o) violates 0 < m <= 2n")
        if isinstance(self.selection, str):
            if self.selection not in ("canonical-window", "natural-occupancy"):
                raise ConfigError(f"unknown orbital selection '{self.selection}'")
        else:
            self.selection = tuple(int(i) for i in self.selection)
            if len(self.selection) != self.n_orbitals:
                raise ConfigError("explicit orbital list length != n_orbitals")

    def validate_against(self, n_total_electrons, n_basis_functions):
        frozen = n_total_electrons - self.n_electrons
        if frozen < 0:
            raise ConfigError("active electrons exceed total electron count")
        if frozen % 2 != 0:
            raise ConfigError(
                f"({self.n_electrons}e, {self.n_orbitals}o) leaves an odd frozen-core"
                f" count {frozen}")
        if frozen // 2 + self.n_orbitals > n_basis_functions:
            raise ConfigError("active space larger than the basis allows")


@dataclass
class GridSpec:
    points: int = 128  # per axis, even
    spacing: float = 0.25  # angstrom

    def __post_init__(self):
        if self.points % 2 != 0 or self.points < 4:
            raise ConfigError(f"grid points per axis must be even, got {self.points}")
        if self.spacing <= 0:
            raise ConfigError("grid spacing must be positive")

    @property
    def spacing_bohr(self):
        return self.spacing * units.BOHR_PER_ANGSTROM

    @property
    def edge(self):
        return self.points * self.spacing


@dataclass
class RunConfig:
    atoms: List[Atom]
    charge: int
    multiplicity: int
    basis_name: str
    solvent_name: str
    solvent: SolventModel
    grid: GridSpec
    method: str  # "rhf" | "vqe"
    active_space: Optional[ActiveSpaceSpec]
    energy_tol: float = 1e-7
    max_cycles: int = 50
    charge_threshold: float = 1e-7
    rism_tol: float = 1e-6
    rism_max_iter: int = 10000
    chi_path: str = ""
    box_margin_warning: bool = field(default=False, init=True)

    @property
    def n_electrons(self):
        return sum(a.Z for a in self.atoms) - self.charge

    def geometry_bohr(self):
        return np.array([a.position_bohr for a in self.atoms])

    def to_toml(self):
        """Canonical TOML serialization (parse -> serialize -> parse is stable)."""
        out = io.StringIO()
        out.write("[solute]\n")
        out.write(f"charge = {self.charge}\n")
        out.write(f"multiplicity = {self.multiplicity}\n")
        out.write('geometry = """\n')
        for a in self.atoms:
            out.write(f"{a.element} {a.position[0]:.12g} {a.position[1]:.12g}"
                      f" {a.position[2]:.12g}\n")
        out.write('"""\n\n[solute.lj]\n')
        seen = {}
        for a in self.atoms:
            if a.element not in seen:
                seen[a.element] = (a.lj_sigma, a.lj_epsilon)
                out.write(f"{a.element} = [{a.lj_sigma:.12g}, {a.lj_epsilon:.12g}]\n")
        out.write(f'\n[basis]\nname = "{self.basis_name}"\n')
        out.write(f'\n[solvent]\nmodel = "{self.solvent_name}"\n')
        out.write(f"\n[grid]\npoints = {self.grid.points}\n"
                  f"spacing = {self.grid.spacing:.12g}\n")
        out.write(f'\n[solver]\nmethod = "{self.method}"\n')
        if self.active_space is not None:
            sp = self.active_space
            out.write(f"active_electrons = {sp.n_electrons}\n")
            out.write(f"active_orbitals = {sp.n_orbitals}\n")
            if isinstance(sp.selection, str):
                out.write(f'orbital_selection = "{sp.selection}"\n')
            else:
                out.write(f"orbital_selection = {list(sp.selection)}\n")
        out.write(f"\n[scf]\nenergy_tol = {self.energy_tol:.12g}\n"
                  f"max_cycles = {self.max_cycles}\n"
                  f"charge_threshold = {self.charge_threshold:.12g}\n")
        out.write(f"\n[rism]\ntolerance = {self.rism_tol:.12g}\n"
                  f"max_iterations = {self.rism_max_iter}\n")
        if self.chi_path:
            out.write(f'chi_path = "{self.chi_path}"\n')
        return out.getvalue()


def _parse_geometry(block):
    atoms = []
    for line in block.strip().splitlines():
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise ConfigError(f"bad geometry record: '{line.strip()}'")
        atoms.append((parts[0], [float(x) for x in parts[1:4]]))
    if not atoms:
        raise ConfigError("empty geometry block")
    return atoms


def validate_config(text, base_dir=None):
    """Parse and fully validate a TOML run configuration."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config does not parse: {exc}") from exc

    try:
        solute = raw["solute"]
        geometry = _parse_geometry(solute["geometry"])
    except KeyError as exc:
        raise ConfigError(f"missing config section/key: {exc}") from exc

    lj = solute.get("lj", {})
    atoms = []
    for el, pos in geometry:
        sig, eps = lj.get(el, (0.0, 0.0))
        atoms.append(Atom(element=el, position=np.array(pos), lj_sigma=float(sig),
                          lj_epsilon=float(eps)))

    charge = int(solute.get("charge", 0))
    multiplicity = int(solute.get("multiplicity", 1))
    if multiplicity != 1:
        raise ConfigError("only closed-shell (multiplicity 1) solutes are supported")

    basis_name = raw.get("basis", {}).get("name", "sto-3g").lower()
    if basis_name not in BASIS_FILES:
        raise ConfigError(f"unknown basis '{basis_name}'; available: {sorted(BASIS_FILES)}")
    basis_data = load_basis_data(basis_name)
    missing = {el for el, _ in geometry} - set(basis_data)
    if missing:
        raise ConfigError(f"basis '{basis_name}' lacks elements {sorted(missing)}")
    from .basis import CARTESIAN_POWERS
    nbf = sum(len(CARTESIAN_POWERS[am]) for el, _ in geometry
              for am, _, _ in basis_data[el])

    n_electrons = sum(ELEMENT_Z[el] for el, _ in geometry) - charge
    if n_electrons <= 0 or n_electrons % 2 != 0:
        raise ConfigError(f"electron count {n_electrons} must be even and positive")

    solvent_name = raw.get("solvent", {}).get("model", "water-tip3p-mod")
    solvent = load_solvent_model(solvent_name if base_dir is None
                                 else _resolve(solvent_name, base_dir))

    g = raw.get("grid", {})
    grid = GridSpec(points=int(g.get("points", 128)),
                    spacing=float(g.get("spacing", 0.25)))

    sol = raw.get("solver", {})
    method = sol.get("method", "rhf").lower()
    if method not in ("rhf", "vqe"):
        raise ConfigError(f"electronic solver must be 'rhf' or 'vqe', got '{method}'")
    active = None
    if method == "vqe":
        try:
            active = ActiveSpaceSpec(
                n_electrons=int(sol["active_electrons"]),
                n_orbitals=int(sol["active_orbitals"]),
                selection=sol.get("orbital_selection", "canonical-window"),
            )
        except KeyError as exc:
            raise ConfigError(f"vqe solver requires active space: missing {exc}") from exc
        active.validate_against(n_electrons, nbf)

    scf = raw.get("scf", {})
    rism = raw.get("rism", {})
    chi_path = rism.get("chi_path", "")
    if chi_path:
        chi_path = str(_resolve(chi_path, base_dir))
        if not Path(chi_path).exists():
            raise ConfigError(f"susceptibility file not found: {chi_path}")

    cfg = RunConfig(
        atoms=atoms, charge=charge, multiplicity=multiplicity,
        basis_name=basis_name, solvent_name=str(solvent_name), solvent=solvent,
        grid=grid, method=method, active_space=active,
        energy_tol=float(scf.get("energy_tol", 1e-7)),
        max_cycles=int(scf.get("max_cycles", 50)),
        charge_threshold=float(scf.get("charge_threshold", 1e-7)),
        rism_tol=float(rism.get("tolerance", 1e-6)),
        rism_max_iter=int(rism.get("max_iterations", 10000)),
        chi_path=chi_path,
    )

    pos = np.array([a.position for a in atoms])
    center = 0.5 * (pos.min(axis=0) + pos.max(axis=0))
    extent = np.abs(pos - center).max()
    margin = grid.edge / 2.0 - extent
    if margin < 10.0:
        cfg.box_margin_warning = True
        warnings.warn(
            f"solvent box margin {margin:.1f} A < 10 A around the solute",
            stacklevel=2)
    return cfg


def _resolve(path, base_dir):
    p = Path(path)
    if base_dir is not None and not p.is_absolute() and not p.exists():
        cand = Path(base_dir) / p
        if cand.exists():
            return cand
    return p


def load_config(path):
    path = Path(path)
    return validate_config(path.read_text(), base_dir=path.parent)
