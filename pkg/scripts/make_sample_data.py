"""Regenerate the bundled sample corpus and the frozen conjugation golden files.

Requires RDKit (dev-only, not a runtime dependency of equihg):

    python scripts/make_sample_data.py

Outputs
  src/equihg/data/sample.sdf           QM9-like molecules with 3D coords (H explicit)
  src/equihg/data/sample_targets.csv   name,gap  (extended-Hueckel HOMO-LUMO gap, meV)
  tests/data/conjugation_golden.json   50 SMILES with RDKit per-bond conjugation flags
  tests/data/sample_conjugation.json   RDKit conjugated components for every sample molecule
"""

import csv
import json
from pathlib import Path

import numpy as np
from rdkit import Chem, RDLogger
from rdkit.Chem import AllChem, rdEHTTools

RDLogger.DisableLog("rdApp.*")

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "src" / "equihg" / "data"
TESTDATA = ROOT / "tests" / "data"

N_SAMPLE = 1000
MAX_HEAVY = 9
MAX_ATOMS = 29

CORES = [
    "c1ccccc1", "c1ccncc1", "c1cc[nH]c1", "c1ccoc1", "c1cncnc1", "c1c[nH]cn1",
    "c1cocn1", "c1ccnnc1", "c1cnoc1", "C=CC=C", "C=CC=O", "C#CC=C", "C=CC#N",
]
ELEMENTS = ["C", "N", "O", "F"]
ELEMENT_P = [0.62, 0.15, 0.18, 0.05]
MAX_VALENCE = {"C": 4, "N": 3, "O": 2, "F": 1}

# Hand-written corpus: alkanes, alkenes, dienes, aromatics, carbonyls, mixed.
GOLDEN_SMILES = [
    # alkanes / saturated
    "C", "CC", "CCC", "CC(C)C", "C1CCCCC1", "CCO", "CCN", "CC(F)(F)F", "C1CC1", "OCCO",
    # alkenes (isolated)
    "C=C", "C=CC", "CC=CC", "C=CCC=C", "C1=CCCC1", "C=CCl", "FC(F)=C",
    # dienes / polyenes / ynes
    "C=CC=C", "C=CC=CC=C", "C#CC=C", "C=CC#N", "C1=CC=CC1", "CC=CC=CC", "C=C(C)C=C",
    # aromatics
    "c1ccccc1", "Cc1ccccc1", "c1ccncc1", "c1ccoc1", "c1cc[nH]c1", "c1ccsc1", "c1ccc2ccccc2c1",
    "c1ccccc1-c1ccccc1", "c1ccccc1Cc1ccccc1", "Oc1ccccc1", "Nc1ccccc1", "Fc1ccccc1", "c1cncnc1",
    # carbonyls
    "CC=O", "CC(C)=O", "C=CC=O", "CC(=O)O", "CC(=O)N", "OC=O", "CC(=O)OC=C", "O=C=O", "NC(N)=O",
    # mixed
    "C=CC(=O)c1ccccc1", "O=[N+]([O-])c1ccccc1", "C=CN", "N#Cc1ccccc1",
]


def free_valence(rw, idx):
    rw.UpdatePropertyCache(strict=False)
    return rw.GetAtomWithIdx(idx).GetNumImplicitHs()


def grow(rng, mol=None):
    """Random valence-respecting growth; returns a sanitized Mol or None."""
    rw = Chem.RWMol(mol) if mol is not None else Chem.RWMol()
    if rw.GetNumAtoms() == 0:
        rw.AddAtom(Chem.Atom(str(rng.choice(["C", "C", "N", "O"]))))
    target = int(rng.integers(max(rw.GetNumAtoms(), 3), MAX_HEAVY + 1))
    tries = 0
    while rw.GetNumAtoms() < target and tries < 50:
        tries += 1
        el = str(rng.choice(ELEMENTS, p=ELEMENT_P))
        hosts = [a.GetIdx() for a in rw.GetAtoms() if free_valence(rw, a.GetIdx()) > 0]
        if not hosts:
            break
        host = int(rng.choice(hosts))
        cap = min(free_valence(rw, host), MAX_VALENCE[el])
        order = 1
        r = rng.random()
        if cap >= 3 and r < 0.06 and not rw.GetAtomWithIdx(host).GetIsAromatic():
            order = 3
        elif cap >= 2 and r < 0.28 and not rw.GetAtomWithIdx(host).GetIsAromatic():
            order = 2
        new = rw.AddAtom(Chem.Atom(el))
        rw.AddBond(host, new, {1: Chem.BondType.SINGLE, 2: Chem.BondType.DOUBLE, 3: Chem.BondType.TRIPLE}[order])
    if rng.random() < 0.3:
        dm = Chem.GetDistanceMatrix(rw)
        cands = [
            (i, j)
            for i in range(rw.GetNumAtoms())
            for j in range(i + 1, rw.GetNumAtoms())
            if 3 <= dm[i, j] <= 5 and free_valence(rw, i) > 0 and free_valence(rw, j) > 0
            and not rw.GetAtomWithIdx(i).GetIsAromatic() and not rw.GetAtomWithIdx(j).GetIsAromatic()
        ]
        if cands:
            i, j = cands[int(rng.integers(len(cands)))]
            rw.AddBond(i, j, Chem.BondType.SINGLE)
    m = rw.GetMol()
    try:
        Chem.SanitizeMol(m)
    except Exception:
        return None
    for b in m.GetBonds():
        if b.IsInRing() and b.GetBondType() == Chem.BondType.TRIPLE:
            return None
    return m


def heavy_conjugation(m):
    pairs = []
    for b in m.GetBonds():
        a, c = b.GetBeginAtomIdx(), b.GetEndAtomIdx()
        pairs.append([min(a, c), max(a, c), int(b.GetIsConjugated())])
    return sorted(pairs)


def components(mh):
    parent = list(range(mh.GetNumAtoms()))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    inside = set()
    for b in mh.GetBonds():
        if b.GetIsConjugated():
            a, c = b.GetBeginAtomIdx(), b.GetEndAtomIdx()
            inside.update((a, c))
            parent[find(a)] = find(c)
    groups = {}
    for i in sorted(inside):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


def eht_gap_mev(mh):
    ok, res = rdEHTTools.RunMol(mh)
    if not ok:
        return None
    e = res.GetOrbitalEnergies()
    n = res.numElectrons
    if n % 2:
        return None
    return float(e[n // 2] - e[n // 2 - 1]) * 1000.0


def make_golden():
    rows = []
    for smi in GOLDEN_SMILES:
        m = Chem.MolFromSmiles(smi)
        lower = [ch.islower() for ch in _atom_tokens(smi)]
        for b in m.GetBonds():
            a, c = b.GetBeginAtomIdx(), b.GetEndAtomIdx()
            written = lower[a] and lower[c] and b.IsInRing()
            assert b.GetIsAromatic() == written, (smi, a, c)
        mh = Chem.AddHs(m)
        rows.append({
            "smiles": smi,
            "num_atoms": mh.GetNumAtoms(),
            "num_bonds": mh.GetNumBonds(),
            "bonds": heavy_conjugation(m),
            "components": components(mh),
        })
    assert len(rows) == 50, len(rows)
    (TESTDATA / "conjugation_golden.json").write_text(json.dumps(rows, indent=1) + "\n")


def _atom_tokens(smi):
    """First letter of each atom token, in SMILES order (enough to tell case)."""
    out = []
    i = 0
    while i < len(smi):
        ch = smi[i]
        if ch == "[":
            j = smi.index("]", i)
            out.append(smi[i + 1])
            i = j + 1
        elif ch.isalpha():
            if smi[i:i + 2] in ("Cl", "Br"):
                out.append(ch)
                i += 2
            else:
                out.append(ch)
                i += 1
        else:
            i += 1
    return out


def make_sample():
    rng = np.random.default_rng(20240917)
    seen = set()
    records = []
    while len(records) < N_SAMPLE:
        if rng.random() < 0.35:
            core = Chem.MolFromSmiles(str(rng.choice(CORES)))
            m = grow(rng, core)
        else:
            m = grow(rng)
        if m is None:
            continue
        smi = Chem.MolToSmiles(m)
        if smi in seen or "." in smi:
            continue
        mh = Chem.AddHs(m)
        if mh.GetNumAtoms() > MAX_ATOMS or m.GetNumAtoms() < 2:
            continue
        if AllChem.EmbedMolecule(mh, randomSeed=int(rng.integers(1 << 30))) != 0:
            continue
        if AllChem.MMFFHasAllMoleculeParams(mh):
            AllChem.MMFFOptimizeMolecule(mh, maxIters=500)
        gap = eht_gap_mev(mh)
        if gap is None or not np.isfinite(gap):
            continue
        seen.add(smi)
        name = f"mol_{len(records):04d}"
        mh.SetProp("_Name", name)
        records.append((name, smi, mh, gap))

    with open(DATA / "sample.sdf", "w") as fh:
        for name, smi, mh, gap in records:
            fh.write(Chem.MolToMolBlock(mh, kekulize=False))
            fh.write("$$$$\n")
    with open(DATA / "sample_targets.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "smiles", "gap"])
        for name, smi, mh, gap in records:
            w.writerow([name, smi, f"{gap:.4f}"])

    # Re-read the written file so flags reflect exactly what equihg will parse.
    golden = {}
    # Aromaticity is taken as written in the file (equihg does no aromaticity perception).
    ops = Chem.SANITIZE_ALL ^ Chem.SANITIZE_SETAROMATICITY ^ Chem.SANITIZE_KEKULIZE
    for m in Chem.SDMolSupplier(str(DATA / "sample.sdf"), removeHs=False, sanitize=False):
        Chem.SanitizeMol(m, sanitizeOps=ops)
        golden[m.GetProp("_Name")] = components(m)
    (TESTDATA / "sample_conjugation.json").write_text(json.dumps(golden) + "\n")


if __name__ == "__main__":
    make_golden()
    make_sample()
