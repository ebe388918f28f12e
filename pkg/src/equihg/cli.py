"""Command-line entry point: ``equihg {convert,inspect,train,eval,check}``.

Exit codes: 0 success, 1 user or data error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .chemio import DatasetError, ParseError, iter_sdf_records, load_dataset, parse_smiles, parse_xyz, sample_paths, split_dataset
from .chemio.molecule import Molecule
from .config import ConfigError, DataConfig, load_config
from .hypergraph import build_hypergraph, molecule_hypergraph, perceive_conjugation
from .model import KINDS
from .nn import CheckpointError
from .trainer import TrainingError, evaluate, train

log = logging.getLogger("equihg")

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2
FORMATS = ("sdf", "xyz", "smiles")
_SUFFIX_FORMAT = {".sdf": "sdf", ".sd": "sdf", ".mol": "sdf", ".xyz": "xyz", ".smi": "smiles", ".smiles": "smiles"}
USER_ERRORS = (ParseError, DatasetError, ConfigError, CheckpointError, TrainingError, ValueError, OSError)


class UsageError(Exception):
    """Bad invocation; reported with the subcommand's usage line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- molecules


def _detect_format(path: Path, fmt: str | None) -> str:
    if fmt:
        return fmt
    if path.is_dir():
        return "xyz"
    try:
        return _SUFFIX_FORMAT[path.suffix.lower()]
    except KeyError:
        raise UsageError(f"cannot infer the format of {path}; pass --format {{{','.join(FORMATS)}}}") from None


def iter_records(path, fmt: str | None = None):
    """Yield ``(label, Molecule | ParseError)`` per record of an SDF, SMILES list, XYZ file or XYZ directory."""
    path = Path(path)
    fmt = _detect_format(path, fmt)
    if fmt == "xyz" and path.is_dir():
        for p in sorted(path.glob("*.xyz")):
            try:
                yield p.name, parse_xyz(p.read_bytes(), name=p.stem)
            except ParseError as exc:
                yield p.name, exc
        return
    data = path.read_bytes()
    if not data.strip():
        return
    if fmt == "sdf":
        for start, result in iter_sdf_records(data):
            yield f"{path.name}:{start}", result
    elif fmt == "xyz":
        try:
            yield path.name, parse_xyz(data, name=path.stem)
        except ParseError as exc:
            yield path.name, exc
    else:
        for no, line in enumerate(data.decode("utf-8").splitlines(), start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split(None, 1)
            name = parts[1].strip() if len(parts) > 1 else f"line{no}"
            try:
                yield f"{path.name}:{no}", parse_smiles(parts[0], name=name)
            except ParseError as exc:
                yield f"{path.name}:{no}", ParseError(str(exc), no)


def _report_parse_error(label: str, exc: ParseError) -> None:
    # SDF/XYZ errors already carry "line N:"; label names the file (and record start).
    print(f"error: {label.split(':')[0]}: {exc}", file=sys.stderr)


def hypergraph_record(mol: Molecule) -> dict:
    hg = molecule_hypergraph(mol)
    return {"name": mol.name, **hg.to_json()}


def molecule_summary(mol: Molecule) -> dict:
    mol = perceive_conjugation(mol)
    hg = build_hypergraph(mol)
    return {
        "name": mol.name,
        "num_atoms": mol.num_atoms,
        "elements": [a.element for a in mol.atoms],
        "has_coords": mol.coords is not None,
        "bonds": [
            {"atoms": [b.a, b.b], "order": b.order.name.lower(), "conjugated": b.conjugated} for b in mol.bonds
        ],
        "hypergraph": hg.to_json(),
    }


# ---------------------------------------------------------------- commands


def cmd_convert(args) -> int:
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    failures = written = 0
    try:
        for label, result in iter_records(args.input, args.format):
            if isinstance(result, ParseError):
                _report_parse_error(label, result)
                failures += 1
                continue
            out.write(json.dumps(hypergraph_record(result)) + "\n")
            written += 1
    finally:
        if out is not sys.stdout:
            out.close()
    log.info("wrote %d hypergraphs, %d records failed", written, failures)
    return EXIT_USER if failures else EXIT_OK


def cmd_inspect(args) -> int:
    failures = 0
    for k, (label, result) in enumerate(iter_records(args.input, args.format)):
        if args.index is not None and k != args.index:
            continue
        if isinstance(result, ParseError):
            _report_parse_error(label, result)
            failures += 1
            continue
        print(json.dumps(molecule_summary(result), indent=2))
    return EXIT_USER if failures else EXIT_OK


def _overrides(args) -> dict:
    keys = {
        "kind": "model.kind", "hidden": "model.hidden", "seed": "model.seed",
        "epochs": "train.epochs", "batch_size": "train.batch_size", "lr": "train.lr",
        "eval_every": "train.eval_every", "out_dir": "train.out_dir", "target": "train.target_name",
        "threads": "train.threads",
        "molecules": "data.molecules", "targets": "data.targets", "n": "data.n", "split_seed": "data.split_seed",
    }
    out = {dotted: getattr(args, name, None) for name, dotted in keys.items()}
    if getattr(args, "seed", None) is not None:
        out["train.seed"] = args.seed
    if getattr(args, "bundled", False):
        out["data.bundled"] = True
    return out


def _load_records(data: DataConfig, target: str):
    if data.bundled:
        molecules, targets = sample_paths()
    else:
        molecules, targets = data.molecules, data.targets
        if targets is None:
            raise UsageError("--targets (or [data] targets) is required with --molecules")
    records = load_dataset(molecules, targets, [target], key_column=data.key_column)
    return records if data.n is None else records[:data.n]


def _data_meta(data: DataConfig) -> dict:
    return {
        "bundled": data.bundled,
        "molecules": None if data.molecules is None else str(Path(data.molecules).resolve()),
        "targets": None if data.targets is None else str(Path(data.targets).resolve()),
        "n": data.n,
        "split_seed": data.split_seed,
        "key_column": data.key_column,
    }


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    if not cfg.data.has_source:
        raise UsageError("no training data: pass --bundled or --molecules/--targets (or set them in [data])")
    target = cfg.train.target_name
    records = _load_records(cfg.data, target)
    train_split, val_split, test_split = split_dataset(records, cfg.data.split_seed)
    log.info("%s on %d/%d/%d train/val/test molecules", cfg.model.kind, len(train_split), len(val_split), len(test_split))
    result = train(cfg.model, cfg.train, train_split, val_split, data_meta=_data_meta(cfg.data))
    if result.checkpoint is None:
        raise TrainingError("no checkpoint was written (validation MAE never finite)")
    report_path = Path(cfg.train.out_dir) / "report_val.json"
    report = evaluate(result.checkpoint, val_split, "val", target, cfg.model.kind, report_path)
    print(json.dumps(report))
    print(f"checkpoint: {result.checkpoint}")
    print(f"metrics: {Path(cfg.train.out_dir) / 'metrics.csv'}")
    print(f"report: {report_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .nn import load_checkpoint

    meta, _, _ = load_checkpoint(args.checkpoint)
    stored = meta.get("data") or {}
    cfg = load_config(args.config, _overrides(args))
    data = cfg.data
    if not data.has_source and stored:
        # Rebuild the split the checkpoint was trained with.
        data = DataConfig(**{k: stored.get(k, getattr(data, k)) for k in DataConfig.__dataclass_fields__})
        if args.n is not None:
            data.n = args.n
        if args.split_seed is not None:
            data.split_seed = args.split_seed
    if not data.has_source:
        raise UsageError("no evaluation data: pass --bundled or --molecules/--targets")
    target = args.target or meta.get("target") or cfg.train.target_name
    records = _load_records(data, target)
    splits = dict(zip(("train", "val", "test"), split_dataset(records, data.split_seed)))
    report_path = args.report or Path(args.checkpoint).with_name(f"report_{args.split}.json")
    report = evaluate(args.checkpoint, splits[args.split], args.split, target, args.kind, report_path)
    print(json.dumps(report))
    print(f"report: {report_path}")
    return EXIT_OK


def cmd_check(args) -> int:
    from . import checks
    from .model import ModelConfig

    cfg = load_config(args.config, _overrides(args))
    model_cfg = cfg.model
    if args.kind_check == "gradcheck" and args.hidden is None:
        # Central differences over every parameter: keep the full vector affordable.
        model_cfg = ModelConfig(**{**model_cfg.to_dict(), "hidden": 16})
    data = cfg.data
    if data.has_source:
        molecules = [r.molecule for r in _load_records(data, cfg.train.target_name)]
    else:
        molecules = [r.molecule for r in load_dataset(*sample_paths(), [cfg.train.target_name])]
    molecules = molecules[:args.count]
    if not molecules:
        raise UsageError("no molecules to check")

    if args.kind_check == "equivariance":
        missing = [m.name for m in molecules if m.coords is None]
        if missing:
            raise UsageError(f"equivariance needs 3D coordinates; missing for {missing[:3]}")
        if model_cfg.kind != "equihgnn":
            raise UsageError("equivariance applies to the equihgnn kind only")
        results = [
            checks.equivariance_check(molecules, model_cfg, args.transforms, args.check_seed),
            checks.coordinate_stream_check(molecules, model_cfg, args.transforms, args.check_seed),
        ]
    elif args.kind_check == "permutation":
        if model_cfg.needs_coords and any(m.coords is None for m in molecules):
            raise UsageError(f"{model_cfg.kind} needs 3D coordinates")
        results = [checks.permutation_check(molecules, model_cfg, args.transforms, args.check_seed)]
    else:
        results = [checks.model_gradcheck(checks.small_molecule(molecules), model_cfg)]
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_USER


# ---------------------------------------------------------------- parser


def _add_data_flags(p, with_model: bool = True) -> None:
    p.add_argument("--config", type=Path, help="config file with [model], [train], [data] sections")
    p.add_argument("--bundled", action="store_true", help="use the bundled 1000-molecule sample set")
    p.add_argument("--molecules", help="SDF file or directory of .xyz files")
    p.add_argument("--targets", help="targets CSV keyed by molecule name")
    p.add_argument("--target", help="target column (default gap)")
    p.add_argument("--n", type=int, help="use only the first N records")
    p.add_argument("--split-seed", type=int, help="seed of the 80/10/10 split")
    if with_model:
        p.add_argument("--kind", choices=KINDS, help="model kind")
        p.add_argument("--hidden", type=int, help="hidden width")
        p.add_argument("--seed", type=int, help="parameter and shuffling seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="equihg", description="Conjugated-system hypergraphs and equivariant hypergraph networks for molecules.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="molecules -> JSON-lines conjugation hypergraphs")
    p.add_argument("input", type=Path)
    p.add_argument("--format", choices=FORMATS, help="input format (default: from the file suffix)")
    p.add_argument("-o", "--output", type=Path, help="output file (default stdout)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("inspect", help="print atoms, conjugated bonds and hyperedges as JSON")
    p.add_argument("input", type=Path)
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--index", type=int, help="only the record at this 0-based position")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("train", help="train a model; keeps the best-validation checkpoint")
    _add_data_flags(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--threads", type=int, help="gradient worker threads (0 = deterministic; default EQUIHG_THREADS)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="MAE of a checkpoint on a split, written as a JSON report")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--kind", choices=KINDS, help="expected model kind; a mismatch is an error")
    p.add_argument("--report", type=Path, help="report path (default next to the checkpoint)")
    _add_data_flags(p, with_model=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="symmetry and gradient checks with fresh random parameters")
    p.add_argument("kind_check", choices=("equivariance", "permutation", "gradcheck"))
    _add_data_flags(p)
    p.add_argument("--count", type=int, default=20, help="number of molecules (default 20)")
    p.add_argument("--transforms", type=int, default=10, help="transforms per molecule (default 10)")
    p.add_argument("--check-seed", type=int, default=0, help="seed for the random transforms")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        sub = {a.dest: a for a in parser._actions}.get("command")
        sub.choices[args.command].print_usage(sys.stderr)
        print(f"equihg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except USER_ERRORS as exc:
        print(f"equihg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # anything else is a bug in this package
        log.debug("internal error", exc_info=True)
        print(f"equihg {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
