"""A SMILES reader for the organic subset plus simple bracket atoms.

Supported: organic-subset atoms and their aromatic forms, bracket atoms with an
explicit hydrogen count and charge, bond symbols ``- = # :``, branches and ring
closures (``1``-``9``, ``%nn``). Stereo marks, isotopes, atom classes and
dot-disconnected components are rejected. Implicit hydrogens are always
materialized as explicit H atoms appended after the heavy atoms.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .molecule import ELEMENT_INDEX, Atom, Bond, BondOrder, Molecule, ParseError

NORMAL_VALENCES = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5), "S": (2, 4, 6),
    "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,),
}
_ORGANIC = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
_AROMATIC = ("b", "c", "n", "o", "p", "s")
_BOND_SYMBOLS = {"-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE, ":": BondOrder.AROMATIC}
_BRACKET = re.compile(
    r"^(?P<iso>\d+)?(?P<sym>Cl|Br|Si|[BCNOPSFIH]|[bcnops])(?P<chiral>@+)?"
    r"(?P<h>H\d*)?(?P<charge>[+-]+\d*)?(?P<cls>:\d+)?$"
)


@dataclass
class _Heavy:
    element: str
    aromatic: bool
    charge: int = 0
    hydrogens: int | None = None  # None: implicit, derived from valence


def _charge(text: str) -> int:
    sign = 1 if text[0] == "+" else -1
    rest = text.lstrip("+-")
    if rest:
        return sign * int(rest)
    return sign * len(text)


def _bracket(body: str, pos: int) -> _Heavy:
    m = _BRACKET.match(body)
    if not m:
        raise ParseError(f"unsupported bracket atom [{body}] at position {pos}")
    if m.group("iso"):
        raise ParseError(f"isotopes are not supported: [{body}] at position {pos}")
    if m.group("chiral"):
        raise ParseError(f"stereochemistry is not supported: [{body}] at position {pos}")
    if m.group("cls"):
        raise ParseError(f"atom classes are not supported: [{body}] at position {pos}")
    sym = m.group("sym")
    aromatic = sym.islower()
    element = sym.capitalize() if aromatic else sym
    h = m.group("h")
    hcount = 0 if not h else (int(h[1:]) if len(h) > 1 else 1)
    charge = _charge(m.group("charge")) if m.group("charge") else 0
    return _Heavy(element, aromatic, charge, hcount)


def _in_ring(n: int, edges: list[tuple[int, int]], skip: int) -> bool:
    """True if edge ``skip`` lies on a cycle (its endpoints stay connected without it)."""
    a, b = edges[skip]
    adj: list[list[int]] = [[] for _ in range(n)]
    for k, (u, v) in enumerate(edges):
        if k != skip:
            adj[u].append(v)
            adj[v].append(u)
    stack, seen = [a], {a}
    while stack:
        u = stack.pop()
        if u == b:
            return True
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return False


def parse_smiles(text: str, name: str = "") -> Molecule:
    heavy: list[_Heavy] = []
    edges: list[tuple[int, int]] = []
    orders: list[BondOrder | None] = []  # None: default, resolved once aromaticity is known
    branch_stack: list[int] = []
    rings: dict[int, tuple[int, BondOrder | None, int]] = {}
    prev: int | None = None
    pending: BondOrder | None = None
    i = 0
    s = text.strip()
    if not s:
        raise ParseError("empty SMILES")

    def add_edge(u: int, v: int, order: BondOrder | None, pos: int):
        key = (min(u, v), max(u, v))
        if u == v or any((min(a, b), max(a, b)) == key for a, b in edges):
            raise ParseError(f"duplicate or self bond at position {pos}")
        edges.append((u, v))
        orders.append(order)

    while i < len(s):
        ch = s[i]
        atom = None
        if ch == "[":
            j = s.find("]", i)
            if j < 0:
                raise ParseError(f"unclosed bracket atom at position {i}")
            atom = _bracket(s[i + 1:j], i)
            i = j + 1
        elif s.startswith(("Cl", "Br"), i):
            atom = _Heavy(s[i:i + 2], False)
            i += 2
        elif ch in _ORGANIC:
            atom = _Heavy(ch, False)
            i += 1
        elif ch in _AROMATIC:
            atom = _Heavy(ch.upper(), True)
            i += 1
        elif ch in _BOND_SYMBOLS:
            if pending is not None:
                raise ParseError(f"two bond symbols in a row at position {i}")
            pending = _BOND_SYMBOLS[ch]
            i += 1
            continue
        elif ch == "(":
            if prev is None:
                raise ParseError(f"branch opened before any atom at position {i}")
            branch_stack.append(prev)
            i += 1
            continue
        elif ch == ")":
            if not branch_stack:
                raise ParseError(f"unmatched ')' at position {i}")
            if pending is not None:
                raise ParseError(f"dangling bond symbol before ')' at position {i}")
            prev = branch_stack.pop()
            i += 1
            continue
        elif ch.isdigit() or ch == "%":
            if ch == "%":
                if not s[i + 1:i + 3].isdigit() or len(s[i + 1:i + 3]) != 2:
                    raise ParseError(f"bad ring label at position {i}")
                label, width = int(s[i + 1:i + 3]), 3
            else:
                label, width = int(ch), 1
            if prev is None:
                raise ParseError(f"ring closure before any atom at position {i}")
            if label in rings:
                other, order, _ = rings.pop(label)
                if order is not None and pending is not None and order != pending:
                    raise ParseError(f"conflicting ring-closure bond orders for label {label}")
                add_edge(other, prev, pending if pending is not None else order, i)
            else:
                rings[label] = (prev, pending, i)
            pending = None
            i += width
            continue
        elif ch in "/\\":
            raise ParseError(f"stereochemistry is not supported: {ch!r} at position {i}")
        elif ch == ".":
            raise ParseError(f"disconnected components are not supported at position {i}")
        else:
            raise ParseError(f"unsupported token {ch!r} at position {i}")

        if atom.element not in ELEMENT_INDEX:
            raise ParseError(f"unsupported element {atom.element!r}")
        heavy.append(atom)
        idx = len(heavy) - 1
        if prev is not None:
            add_edge(prev, idx, pending, i)
        elif pending is not None:
            raise ParseError(f"bond symbol before first atom at position {i}")
        pending = None
        prev = idx

    if branch_stack:
        raise ParseError("unmatched '(' (branch never closed)")
    if rings:
        label = next(iter(rings))
        raise ParseError(f"unmatched ring closure {label}")
    if pending is not None:
        raise ParseError("SMILES ends with a bond symbol")

    n = len(heavy)
    resolved: list[BondOrder] = []
    for (u, v), order in zip(edges, orders):
        if order is None:
            order = BondOrder.AROMATIC if heavy[u].aromatic and heavy[v].aromatic else BondOrder.SINGLE
        if order is BondOrder.AROMATIC and not (heavy[u].aromatic and heavy[v].aromatic):
            raise ParseError(f"aromatic bond between non-aromatic atoms {u} and {v}")
        resolved.append(order)
    # An implicit bond between two aromatic atoms that is not on a ring (biphenyl) is single.
    for k, (order, explicit) in enumerate(zip(resolved, orders)):
        if order is BondOrder.AROMATIC and explicit is None and not _in_ring(n, edges, k):
            resolved[k] = BondOrder.SINGLE

    sigma = [0] * n
    total = [0.0] * n
    for (u, v), order in zip(edges, resolved):
        for w in (u, v):
            sigma[w] += 1 if order is BondOrder.AROMATIC else order.value
            total[w] += order.valence

    hcounts = []
    for k, atom in enumerate(heavy):
        if atom.hydrogens is not None:
            hcounts.append(atom.hydrogens)
            continue
        valences = NORMAL_VALENCES[atom.element]
        if atom.aromatic:
            if sigma[k] > max(valences):
                raise ParseError(f"valence overflow on aromatic {atom.element.lower()} (atom {k})")
            hcounts.append(max(0, valences[0] - sigma[k] - 1))
            continue
        used = int(-(-total[k] // 1))  # ceil
        fitting = [v for v in valences if v >= used]
        if not fitting:
            raise ParseError(f"valence overflow on {atom.element} (atom {k}): {used} > {max(valences)}")
        hcounts.append(fitting[0] - used)

    atoms = [Atom(a.element, k, a.charge, a.aromatic) for k, a in enumerate(heavy)]
    bonds = [Bond(u, v, order) for (u, v), order in zip(edges, resolved)]
    for k, h in enumerate(hcounts):
        for _ in range(h):
            idx = len(atoms)
            atoms.append(Atom("H", idx))
            bonds.append(Bond(k, idx, BondOrder.SINGLE))
    return Molecule(tuple(atoms), tuple(bonds), None, name or text)
