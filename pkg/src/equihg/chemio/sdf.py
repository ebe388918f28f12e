"""MDL molfile V2000 / SD file reading and writing."""

from __future__ import annotations

import numpy as np

from .molecule import ELEMENT_INDEX, Atom, Bond, BondOrder, Molecule, ParseError

# Atom-block charge codes (column 37-39); 4 is a doublet radical, which carries no charge.
_CHARGE_CODES = {0: 0, 1: 3, 2: 2, 3: 1, 4: 0, 5: -1, 6: -2, 7: -3}
_CODE_FOR_CHARGE = {3: 1, 2: 2, 1: 3, 0: 0, -1: 5, -2: 6, -3: 7}


def _decode(data) -> str:
    if isinstance(data, (bytes, bytearray, memoryview)):
        return bytes(data).decode("utf-8")
    return data


def _is_terminator(line: str) -> bool:
    return line.startswith("M  END") or line.startswith("$$$$")


def _parse_block(lines: list[str], start: int) -> Molecule:
    """Parse one molfile whose first line is ``lines[0]`` (file line ``start``)."""
    if len(lines) < 4:
        raise ParseError("truncated header, counts line missing", start + len(lines))
    name = lines[0].strip()
    counts = lines[3]
    counts_no = start + 3
    try:
        n_atoms = int(counts[0:3])
        n_bonds = int(counts[3:6])
    except ValueError:
        raise ParseError(f"malformed counts line {counts!r}", counts_no) from None
    if "V3000" in counts:
        raise ParseError("V3000 molfiles are not supported", counts_no)
    if n_atoms < 0 or n_bonds < 0:
        raise ParseError("negative atom or bond count", counts_no)

    atoms: list[Atom] = []
    coords = np.zeros((n_atoms, 3))
    row = 4
    for i in range(n_atoms):
        line_no = start + row
        if row >= len(lines) or _is_terminator(lines[row]) or len(lines[row].rstrip()) < 34:
            raise ParseError(f"atom count mismatch: counts line declares {n_atoms} atoms, found {i}", line_no)
        line = lines[row]
        for k in range(3):
            field = line[10 * k:10 * (k + 1)]
            try:
                coords[i, k] = float(field)
            except ValueError:
                raise ParseError(f"non-numeric coordinate {field.strip()!r}", line_no) from None
            if not np.isfinite(coords[i, k]):
                raise ParseError(f"non-finite coordinate {field.strip()!r}", line_no)
        symbol = line[31:34].strip()
        if symbol not in ELEMENT_INDEX:
            raise ParseError(f"unsupported element {symbol!r}", line_no)
        code = line[36:39].strip()
        try:
            charge = _CHARGE_CODES[int(code)] if code else 0
        except (ValueError, KeyError):
            raise ParseError(f"bad charge code {code!r}", line_no) from None
        atoms.append(Atom(symbol, i, charge))
        row += 1

    bonds: list[Bond] = []
    seen = set()
    for j in range(n_bonds):
        line_no = start + row
        if row >= len(lines) or _is_terminator(lines[row]):
            raise ParseError(f"bond count mismatch: counts line declares {n_bonds} bonds, found {j}", line_no)
        line = lines[row]
        try:
            a = int(line[0:3]) - 1
            b = int(line[3:6]) - 1
            code = int(line[6:9])
        except ValueError:
            raise ParseError(f"malformed bond line {line!r}", line_no) from None
        if not (0 <= a < n_atoms and 0 <= b < n_atoms) or a == b:
            raise ParseError(f"bond references invalid atoms {a + 1}-{b + 1}", line_no)
        if code not in (1, 2, 3, 4):
            raise ParseError(f"unsupported bond order code {code}", line_no)
        key = (min(a, b), max(a, b))
        if key in seen:
            raise ParseError(f"duplicate bond {a + 1}-{b + 1}", line_no)
        seen.add(key)
        bonds.append(Bond(a, b, BondOrder(code)))
        row += 1

    # Properties block: M  CHG supersedes every atom-block charge.
    charges = None
    while row < len(lines) and not lines[row].startswith("M  END"):
        line = lines[row]
        if line.startswith("M  CHG"):
            parts = line[6:].split()
            try:
                count = int(parts[0])
                pairs = [(int(parts[1 + 2 * k]) - 1, int(parts[2 + 2 * k])) for k in range(count)]
            except (ValueError, IndexError):
                raise ParseError(f"malformed charge line {line!r}", start + row) from None
            if charges is None:
                charges = [0] * n_atoms
            for idx, q in pairs:
                if not 0 <= idx < n_atoms:
                    raise ParseError(f"charge on missing atom {idx + 1}", start + row)
                charges[idx] = q
        row += 1
    if charges is not None:
        atoms = [Atom(a.element, a.index, charges[a.index]) for a in atoms]

    aromatic_atoms = {i for bd in bonds if bd.order is BondOrder.AROMATIC for i in (bd.a, bd.b)}
    atoms = [Atom(a.element, a.index, a.formal_charge, a.index in aromatic_atoms) for a in atoms]
    return Molecule(tuple(atoms), tuple(bonds), coords, name)


def iter_sdf_records(data):
    """Yield ``(first_line, Molecule | ParseError)`` for every record, continuing past bad ones."""
    lines = _decode(data).splitlines()
    block: list[str] = []
    start = 1

    def parse(block, start):
        try:
            return _parse_block(block, start)
        except ParseError as exc:
            return exc

    for no, line in enumerate(lines, start=1):
        if line.startswith("$$$$"):
            yield start, parse(block, start)
            block = []
            start = no + 1
        else:
            block.append(line)
    if any(line.strip() for line in block):
        yield start, parse(block, start)


def parse_sdf(data) -> list[Molecule]:
    """Parse a stream of V2000 molfile blocks separated by ``$$$$``; the first bad record raises."""
    molecules = []
    for _, result in iter_sdf_records(data):
        if isinstance(result, ParseError):
            raise result
        molecules.append(result)
    return molecules


def read_sdf(path) -> list[Molecule]:
    with open(path, "rb") as fh:
        return parse_sdf(fh.read())


def _mol_block(mol: Molecule) -> str:
    coords = mol.coords if mol.coords is not None else np.zeros((mol.num_atoms, 3))
    out = [mol.name, "  equihg          3D", ""]
    out.append(f"{mol.num_atoms:3d}{len(mol.bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
    for atom, (x, y, z) in zip(mol.atoms, coords):
        code = _CODE_FOR_CHARGE.get(atom.formal_charge, 0)
        out.append(f"{x:10.4f}{y:10.4f}{z:10.4f} {atom.element:<3s} 0{code:3d}  0  0  0  0  0  0  0  0  0  0")
    for bond in mol.bonds:
        out.append(f"{bond.a + 1:3d}{bond.b + 1:3d}{bond.order.value:3d}  0")
    charged = [a for a in mol.atoms if a.formal_charge]
    for k in range(0, len(charged), 8):
        chunk = charged[k:k + 8]
        out.append(f"M  CHG{len(chunk):3d}" + "".join(f" {a.index + 1:3d} {a.formal_charge:3d}" for a in chunk))
    out.append("M  END")
    return "\n".join(out) + "\n"


def write_sdf(molecules) -> str:
    """Serialize molecules to SD text (4-decimal coordinates, aromatic bonds as code 4)."""
    return "".join(_mol_block(m) + "$$$$\n" for m in molecules)
