"""Plain XYZ coordinate files (no connectivity)."""

from __future__ import annotations

import numpy as np

from .molecule import ELEMENT_INDEX, Atom, Molecule, ParseError


def _symbol(raw: str) -> str:
    return raw[:1].upper() + raw[1:].lower()


def parse_xyz(data, name: str = "") -> Molecule:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing atom count", 1)
    try:
        n = int(lines[0].split()[0])
    except ValueError:
        raise ParseError(f"bad atom count {lines[0].strip()!r}", 1) from None
    if n < 0:
        raise ParseError("negative atom count", 1)
    rows = [(no, line) for no, line in enumerate(lines[2:], start=3) if line.strip()]
    if len(rows) != n:
        line = rows[n][0] if len(rows) > n else len(lines) + 1
        raise ParseError(f"count mismatch: header declares {n} atoms, found {len(rows)} rows", line)
    atoms = []
    coords = np.zeros((n, 3))
    for i, (no, line) in enumerate(rows):
        parts = line.split()
        if len(parts) < 4:
            raise ParseError(f"expected 'symbol x y z', got {line.strip()!r}", no)
        sym = _symbol(parts[0])
        if sym not in ELEMENT_INDEX:
            raise ParseError(f"unsupported element {parts[0]!r}", no)
        try:
            coords[i] = [float(v) for v in parts[1:4]]
        except ValueError:
            raise ParseError(f"unparseable coordinate in {line.strip()!r}", no) from None
        if not np.all(np.isfinite(coords[i])):
            raise ParseError("non-finite coordinate", no)
        atoms.append(Atom(sym, i))
    return Molecule(tuple(atoms), (), coords, name)


def read_xyz(path) -> Molecule:
    from pathlib import Path

    path = Path(path)
    return parse_xyz(path.read_bytes(), name=path.stem)
