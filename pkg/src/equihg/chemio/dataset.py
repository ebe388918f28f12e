"""Joining structures with target tables, and deterministic 80/10/10 splits."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .molecule import Molecule
from .sdf import read_sdf
from .xyz import read_xyz


class DatasetError(ValueError):
    pass


class DatasetWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DatasetRecord:
    molecule: Molecule
    targets: dict


def sample_paths() -> tuple[Path, Path]:
    """Paths of the bundled QM9-like sample (SDF with 3D coords, targets CSV)."""
    root = resources.files("equihg") / "data"
    return Path(str(root / "sample.sdf")), Path(str(root / "sample_targets.csv"))


def read_molecules(source) -> list[Molecule]:
    source = Path(source)
    if source.is_dir():
        return [read_xyz(p) for p in sorted(source.glob("*.xyz"))]
    if not source.exists():
        raise DatasetError(f"molecule source {source} does not exist")
    return read_sdf(source)


def load_dataset(molecule_source, targets_csv, target_names, key_column: str = "name") -> list[DatasetRecord]:
    """Join molecules (SDF file or directory of .xyz) to target rows by molecule name.

    Molecules without a complete set of targets, and target rows without a
    structure, are dropped; one :class:`DatasetWarning` reports the counts.
    """
    target_names = list(target_names)
    molecules = read_molecules(molecule_source)
    with open(targets_csv, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if key_column not in header:
            raise DatasetError(f"targets CSV {targets_csv} lacks key column {key_column!r}")
        missing = [t for t in target_names if t not in header]
        if missing:
            raise DatasetError(f"targets CSV {targets_csv} lacks target columns {missing}")
        table = {}
        for row in reader:
            values = {}
            for t in target_names:
                cell = (row[t] or "").strip()
                if not cell:
                    break
                values[t] = float(cell)
            else:
                table[row[key_column]] = values

    records = [DatasetRecord(m, table[m.name]) for m in molecules if m.name in table]
    if not records:
        raise DatasetError("no overlap between structures and target rows")
    names = {m.name for m in molecules}
    dropped_mols = len(molecules) - len(records)
    dropped_rows = sum(1 for k in table if k not in names)
    if dropped_mols or dropped_rows:
        warnings.warn(
            f"dropped {dropped_mols} molecules without targets and {dropped_rows} target rows without structures",
            DatasetWarning,
            stacklevel=2,
        )
    return records


def load_sample(n: int | None = None, target: str = "gap") -> list[DatasetRecord]:
    sdf, csv_path = sample_paths()
    records = load_dataset(sdf, csv_path, [target])
    return records if n is None else records[:n]


def split_dataset(records, seed: int):
    """Shuffle by ``seed`` and cut at floor(0.8 N) and floor(0.9 N)."""
    records = list(records)
    n = len(records)
    if n < 10:
        raise DatasetError(f"need at least 10 records to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    a, b = (8 * n) // 10, (9 * n) // 10
    pick = lambda idx: [records[k] for k in idx]  # noqa: E731
    return pick(order[:a]), pick(order[a:b]), pick(order[b:])
