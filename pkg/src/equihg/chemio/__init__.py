from .dataset import (
    DatasetError,
    DatasetRecord,
    DatasetWarning,
    load_dataset,
    load_sample,
    read_molecules,
    sample_paths,
    split_dataset,
)
from .molecule import ELEMENTS, Atom, Bond, BondOrder, Molecule, ParseError
from .sdf import iter_sdf_records, parse_sdf, read_sdf, write_sdf
from .smiles import parse_smiles
from .xyz import parse_xyz, read_xyz

__all__ = [
    "Atom", "Bond", "BondOrder", "DatasetError", "DatasetRecord", "DatasetWarning", "ELEMENTS",
    "iter_sdf_records",
    "Molecule", "ParseError", "load_dataset", "load_sample", "parse_sdf", "parse_smiles",
    "parse_xyz", "read_molecules", "read_sdf", "read_xyz", "sample_paths", "split_dataset", "write_sdf",
]
