"""Core molecular containers shared by every parser."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

# Whitelist of supported elements; the index is the one-hot slot used by featurizers.
ELEMENTS = ("H", "B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "Br", "I")
ELEMENT_INDEX = {sym: i for i, sym in enumerate(ELEMENTS)}


class ParseError(ValueError):
    """Malformed molecular input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BondOrder(enum.Enum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence(self) -> float:
        return 1.5 if self is BondOrder.AROMATIC else float(self.value)

    @property
    def is_multiple(self) -> bool:
        return self is not BondOrder.SINGLE


@dataclass(frozen=True)
class Atom:
    element: str
    index: int
    formal_charge: int = 0
    aromatic: bool = False

    def __post_init__(self):
        if self.element not in ELEMENT_INDEX:
            raise ParseError(f"unsupported element {self.element!r}")


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE
    conjugated: bool = False

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError(f"self-bond on atom {self.a}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.a, self.b) if self.a < self.b else (self.b, self.a)

    def other(self, i: int) -> int:
        return self.b if i == self.a else self.a


@dataclass(frozen=True)
class Molecule:
    """Immutable molecule. ``coords`` is an (N, 3) float64 array in Angstrom or None."""

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...] = ()
    coords: np.ndarray | None = field(default=None, compare=False)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "bonds", tuple(self.bonds))
        n = len(self.atoms)
        for i, atom in enumerate(self.atoms):
            if atom.index != i:
                raise ValueError(f"atom indices must be contiguous from 0, got {atom.index} at {i}")
        seen = set()
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise ValueError(f"bond {bond.a}-{bond.b} references a missing atom (n={n})")
            if bond.key in seen:
                raise ValueError(f"duplicate bond {bond.key}")
            seen.add(bond.key)
        if self.coords is not None:
            xyz = np.array(self.coords, dtype=np.float64).reshape(-1, 3) if n else np.zeros((0, 3))
            if xyz.shape != (n, 3):
                raise ValueError(f"coords shape {xyz.shape} does not match {n} atoms")
            if not np.all(np.isfinite(xyz)):
                raise ValueError("coords contain non-finite values")
            xyz.setflags(write=False)
            object.__setattr__(self, "coords", xyz)

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @property
    def has_coords(self) -> bool:
        return self.coords is not None

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            nbrs[bond.a].append(bond.b)
            nbrs[bond.b].append(bond.a)
        return nbrs

    def degrees(self) -> list[int]:
        deg = [0] * len(self.atoms)
        for bond in self.bonds:
            deg[bond.a] += 1
            deg[bond.b] += 1
        return deg

    def with_coords(self, coords) -> "Molecule":
        return replace(self, coords=np.asarray(coords, dtype=np.float64))

    def permuted(self, perm) -> "Molecule":
        """Relabel atoms so that old atom ``i`` becomes new atom ``perm[i]``."""
        perm = [int(p) for p in perm]
        n = len(self.atoms)
        if sorted(perm) != list(range(n)):
            raise ValueError("perm is not a permutation of the atom indices")
        atoms = [None] * n
        for old, new in enumerate(perm):
            atoms[new] = replace(self.atoms[old], index=new)
        bonds = [replace(b, a=perm[b.a], b=perm[b.b]) for b in self.bonds]
        coords = None
        if self.coords is not None:
            coords = np.empty_like(self.coords)
            coords[perm] = self.coords
        return Molecule(tuple(atoms), tuple(bonds), coords, self.name)
