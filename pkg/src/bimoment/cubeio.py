"""Gaussian cube reader/writer.

Layout handled here:

* two comment lines
* atom count and grid origin (negative count marks the orbital convention:
  one extra record listing orbital ids precedes the data block)
* three axis records (vertex count + step vector); only orthogonal
  axis-aligned grids are supported
* one record per atom: atomic number, charge, center
* volumetric block, z-fastest in file order; remapped to the package's
  x-fastest layout on load

Coordinates are taken as Bohr (the cube convention); the default seed weight
is the element's squared covalent radius from the bundled table, converted
from Angstrom to Bohr.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .grids import Atom, AtomList, GridSpec, ScalarGrid

__all__ = [
    "CubeParseError",
    "load_cube",
    "write_cube",
    "covalent_radius",
    "default_atom_weight",
    "element_symbol",
]

BOHR_PER_ANGSTROM = 1.8897259886

# Z -> symbol for the elements covered by the bundled radius table
_SYMBOLS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co "
    "Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb "
    "Te I Xe"
).split()
_Z_BY_SYMBOL = {s: z + 1 for z, s in enumerate(_SYMBOLS)}

_AXIS_TOL = 1e-9  # relative off-axis tolerance for axis records


class CubeParseError(ValueError):
    """Raised for malformed or unsupported cube files."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _radius_table() -> dict[str, float]:
    with resources.files("bimoment.data").joinpath("covalent_radii.json").open() as fh:
        table = json.load(fh)
    if table.get("units") != "angstrom":
        raise CubeParseError(f"unsupported radius table units {table.get('units')!r}")
    return table["radii"]


_RADII_ANGSTROM = _radius_table()


def element_symbol(atomic_number: int) -> str:
    z = int(atomic_number)
    if not 1 <= z <= len(_SYMBOLS):
        raise CubeParseError(f"unsupported atomic number {z}")
    return _SYMBOLS[z - 1]


def covalent_radius(element: str) -> float:
    """Covalent radius in Bohr."""
    try:
        return _RADII_ANGSTROM[element] * BOHR_PER_ANGSTROM
    except KeyError:
        raise CubeParseError(f"no covalent radius for element {element!r}") from None


def default_atom_weight(element: str) -> float:
    """Squared covalent radius, the power-diagram weight default."""
    r = covalent_radius(element)
    return r * r


class _Records:
    """Whitespace token stream over the file with line tracking for errors."""

    def __init__(self, lines: list[str]):
        self.lines = lines
        self.lineno = 0  # 1-based index of the most recently consumed line
        self._tokens: list[str] = []

    def next_line_tokens(self) -> list[str]:
        if self.lineno >= len(self.lines):
            raise CubeParseError("unexpected end of file", self.lineno)
        self.lineno += 1
        return self.lines[self.lineno - 1].split()

    def remaining_tokens(self):
        for i in range(self.lineno, len(self.lines)):
            for tok in self.lines[i].split():
                yield tok, i + 1


def _floats(tokens: list[str], n: int, lineno: int, what: str) -> list[float]:
    if len(tokens) < n:
        raise CubeParseError(f"expected {n} fields for {what}, got {len(tokens)}", lineno)
    try:
        return [float(t) for t in tokens[:n]]
    except ValueError as exc:
        raise CubeParseError(f"bad {what}: {exc}", lineno) from None


def load_cube(path) -> tuple[ScalarGrid, AtomList]:
    """Parse a cube file into a grid plus its atom records.

    Atom weights default to the squared covalent radius of the element.
    Raises CubeParseError with a line number for malformed input.
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    rec = _Records(lines)

    rec.next_line_tokens()  # two comment lines, content ignored
    rec.next_line_tokens()

    toks = rec.next_line_tokens()
    header = _floats(toks, 4, rec.lineno, "atom count and origin")
    natoms = int(header[0])
    if len(toks) >= 5:
        nval = int(float(toks[4]))
        if nval != 1:
            raise CubeParseError(f"NVAL={nval} not supported", rec.lineno)
    origin = tuple(header[1:4])
    orbital_convention = natoms < 0
    natoms = abs(natoms)

    dims = []
    spacing = []
    for axis in range(3):
        toks = rec.next_line_tokens()
        vals = _floats(toks, 4, rec.lineno, f"axis {axis + 1} record")
        n = int(vals[0])
        if n < 1:
            raise CubeParseError(f"axis {axis + 1} vertex count {n} invalid", rec.lineno)
        vec = vals[1:4]
        step = vec[axis]
        off_axis = max(abs(vec[i]) for i in range(3) if i != axis)
        if step <= 0 or off_axis > _AXIS_TOL * max(abs(step), 1.0):
            raise CubeParseError(
                f"axis {axis + 1} vector {tuple(vec)} is not axis-aligned "
                "(non-orthogonal grids unsupported)",
                rec.lineno,
            )
        dims.append(n)
        spacing.append(step)

    atoms = []
    for i in range(natoms):
        toks = rec.next_line_tokens()
        vals = _floats(toks, 5, rec.lineno, f"atom record {i + 1}")
        symbol = element_symbol(int(vals[0]))
        atoms.append(
            Atom(
                id=i,
                element=symbol,
                center=(vals[2], vals[3], vals[4]),
                weight=default_atom_weight(symbol),
            )
        )

    if orbital_convention:
        toks = rec.next_line_tokens()
        if not toks:
            raise CubeParseError("missing orbital id record", rec.lineno)
        try:
            norb = int(float(toks[0]))
        except ValueError:
            raise CubeParseError("bad orbital count", rec.lineno) from None
        if norb != 1:
            raise CubeParseError(
                f"{norb} orbitals per point not supported (expected 1)", rec.lineno
            )
        ids = toks[1:]
        while len(ids) < norb:  # ids may wrap onto following lines
            ids.extend(rec.next_line_tokens())

    # file order is axis-1 slowest / axis-3 fastest
    n_expected = dims[0] * dims[1] * dims[2]
    data = np.empty(n_expected, dtype=np.float64)
    count = 0
    for tok, lineno in rec.remaining_tokens():
        if count >= n_expected:
            raise CubeParseError(
                f"more than {n_expected} data values present", lineno
            )
        try:
            data[count] = float(tok)
        except ValueError:
            raise CubeParseError(f"bad data value {tok!r}", lineno) from None
        count += 1
    if count != n_expected:
        raise CubeParseError(
            f"truncated data block: expected {n_expected} values, got {count}",
            len(lines),
        )

    spec = GridSpec(dims=tuple(dims), origin=origin, spacing=tuple(spacing))
    # remap z-fastest file order to internal x-fastest
    flat = np.ascontiguousarray(
        data.reshape(dims[0], dims[1], dims[2]).transpose(2, 1, 0)
    ).reshape(-1)
    return ScalarGrid(spec, flat), AtomList(tuple(atoms))


def write_cube(path, grid: ScalarGrid, atoms: AtomList | None = None, comment: str = "") -> None:
    """Write a grid (and optional atoms) as a cube file.

    Numeric fields are emitted with full float64 round-trip precision, so
    load_cube(write_cube(load_cube(p))) reproduces values bit-exactly.
    """
    atoms = atoms if atoms is not None else AtomList()
    spec = grid.spec
    nx, ny, nz = spec.dims
    lines = []
    lines.append(comment or "bimoment volumetric export")
    lines.append("flat x-fastest source, written z-fastest")
    ox, oy, oz = spec.origin
    lines.append(f"{len(atoms):5d} {ox:.17g} {oy:.17g} {oz:.17g}")
    steps = spec.spacing
    for axis, n in enumerate((nx, ny, nz)):
        vec = [0.0, 0.0, 0.0]
        vec[axis] = steps[axis]
        lines.append(f"{n:5d} {vec[0]:.17g} {vec[1]:.17g} {vec[2]:.17g}")
    for atom in atoms:
        z = _Z_BY_SYMBOL.get(atom.element)
        if z is None:
            raise CubeParseError(f"cannot encode element {atom.element!r}")
        cx, cy, cz = atom.center
        lines.append(f"{z:5d} {0.0:.17g} {cx:.17g} {cy:.17g} {cz:.17g}")

    data = grid.values.reshape((nz, ny, nx)).transpose(2, 1, 0).reshape(-1)
    for start in range(0, data.shape[0], 6):
        chunk = data[start : start + 6]
        lines.append(" ".join(f"{v:.17g}" for v in chunk))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
