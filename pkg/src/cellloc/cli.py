"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration problem, 3 input data fails
validation, 4 unexpected internal error.

Every command that produces an output directory also writes a manifest.json
recording the tool version, the resolved configuration, input file hashes,
and output names. Manifests contain no timestamps or absolute paths, so a
rerun with the same inputs and seed reproduces every output byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    DataError,
    MeasurementSet,
    NodeMask,
    enumerate_splits,
    load_dir,
    load_set,
    select_nodes,
    write_set,
)
from .evaluate import (
    DEFAULT_N_TRAIN,
    FilterSpec,
    PipelineConfig,
    run_pipeline,
    sweep_l,
    sweep_node_masks,
)
from .postprocess import DEFAULT_EPS, Hmm, hmm_filter, median_filter
from .synth import Scenario, generate_sets

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

DATA_DIR_ENV = "CELLLOC_DATA_DIR"


class ConfigError(Exception):
    """Bad command-line or configuration input (exit 2)."""


def _sha256(path: Path) -> str:
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(out_dir: Path, command: str, config, inputs: dict[str, Path],
                    outputs: list[str], seed: int | None = None) -> None:
    payload = {
        "tool": "cellloc",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": {name: _sha256(p) for name, p in sorted(inputs.items())},
        "outputs": sorted(outputs),
    }
    _write_json(out_dir / "manifest.json", payload)


def _data_dir(args) -> Path:
    raw = args.data or os.environ.get(DATA_DIR_ENV)
    if not raw:
        raise ConfigError(f"no data directory; pass --data or set {DATA_DIR_ENV}")
    path = Path(raw)
    if not path.is_dir():
        raise ConfigError(f"data directory {raw!r} does not exist")
    return path


def _load_corpus(args) -> tuple[Path, list[MeasurementSet], dict[str, Path]]:
    data = _data_dir(args)
    sets = load_dir(data)
    raw = (args.data or os.environ.get(DATA_DIR_ENV)).rstrip("/")
    inputs = {f"{raw}/{ms.id}.csv": data / f"{ms.id}.csv" for ms in sets}
    return data, sets, inputs


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_filter(token: str, eps: float, chain: bool) -> FilterSpec:
    token = token.strip()
    if token == "none":
        return FilterSpec("none")
    if token == "hmm":
        return FilterSpec("hmm", hmm_eps=eps, hmm_chain=chain)
    if token == "median":
        return FilterSpec("median")
    if token.startswith("median:"):
        try:
            m = int(token.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad median window in {token!r}") from None
        return FilterSpec("median", median_m=m)
    raise ConfigError(f"unknown filter {token!r}; use none, median[:M], or hmm")


def _mask_from_nodes(node_labels, spec: str | None) -> NodeMask | None:
    if spec is None:
        return None
    names = [n.strip() for n in spec.split(",") if n.strip()]
    if not names:
        raise ConfigError("empty node list")
    return NodeMask.from_names(node_labels, names)


def cmd_generate(args) -> int:
    if args.sets < 1:
        raise ConfigError(f"--sets must be >= 1, got {args.sets}")
    scenario = Scenario.load(args.scenario) if args.scenario else Scenario()
    out = _out_dir(args)
    sets = generate_sets(scenario, args.sets, seed=args.seed)
    outputs = []
    for ms in sets:
        name = f"{ms.id}.csv"
        write_set(ms, out / name)
        outputs.append(name)
    (out / "scenario.json").write_text(scenario.to_json(), encoding="utf-8")
    outputs.append("scenario.json")
    inputs = {args.scenario: Path(args.scenario)} if args.scenario else {}
    _write_manifest(out, "generate", json.loads(scenario.to_json()), inputs,
                    outputs + ["manifest.json"], seed=args.seed)
    print(f"wrote {len(sets)} sets to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _, sets, inputs = _load_corpus(args)
    if args.median_m is not None:
        if args.filter == "hmm":
            raise ConfigError("--median-m conflicts with --filter hmm")
        filt = FilterSpec("median", median_m=args.median_m)
    else:
        filt = _parse_filter(args.filter, args.hmm_eps, args.hmm_chain)
    mask = _mask_from_nodes(sets[0].node_labels, args.nodes)
    config = PipelineConfig(moment_l=args.l, k=args.k, standardize=not args.no_standardize,
                            filter=filt, node_mask=mask)
    splits = enumerate_splits([ms.id for ms in sets], args.n_train)
    reports = [run_pipeline(sets, s, config) for s in splits]
    mean = float(np.mean([r.accuracy for r in reports]))

    cfg_snapshot = {
        "moment_l": args.l, "k": args.k, "standardize": not args.no_standardize,
        "filter": filt.label, "nodes": args.nodes, "n_train": args.n_train,
    }
    out = _out_dir(args)
    report = {
        "mean_accuracy": mean,
        "n_splits": len(reports),
        "config": cfg_snapshot,
        "splits": [r.to_dict() for r in reports],
    }
    _write_json(out / "report.json", report)

    lines = ["split,val_id,t,truth,y_hat,z_hat"]
    for r in reports:
        split_name = "+".join(r.split.train_ids)
        for i in range(len(r.t)):
            lines.append(f"{split_name},{r.split.val_id},{r.t[i]},{r.truth[i]},{r.y_hat[i]},{r.z_hat[i]}")
    (out / "predictions.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    _write_manifest(out, "evaluate", cfg_snapshot, inputs,
                    ["report.json", "predictions.csv", "manifest.json"])
    print(f"mean accuracy over {len(reports)} splits: {mean:.4f}")
    return EXIT_OK


def cmd_sweep_l(args) -> int:
    _, sets, inputs = _load_corpus(args)
    try:
        l_values = [int(v) for v in args.l_values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad --l-values {args.l_values!r}") from None
    if not l_values:
        raise ConfigError("empty --l-values")
    filters = [_parse_filter(tok, args.hmm_eps, args.hmm_chain)
               for tok in args.filters.split(",") if tok.strip()]
    if not filters:
        raise ConfigError("empty --filters")
    mask = _mask_from_nodes(sets[0].node_labels, args.nodes)
    masks = None if mask is None else [mask]
    result = sweep_l(sets, l_values, filters, masks=masks, n_train=args.n_train,
                     k=args.k, jobs=args.jobs)

    out = _out_dir(args)
    lines = ["l,filter,mask_bits,train_ids,val_id,accuracy"]
    for c in result.cells:
        lines.append(f"{c.l},{c.filter_label},{c.mask_bits},{'+'.join(c.train_ids)},"
                     f"{c.val_id},{c.accuracy:.6f}")
    (out / "sweep_cells.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    means = result.means()
    lines = ["l,filter,mean_accuracy"]
    for (l, label), m in means.items():
        lines.append(f"{l},{label},{m:.6f}")
    (out / "sweep_summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    cfg_snapshot = {
        "l_values": l_values, "filters": [f.label for f in filters], "k": args.k,
        "nodes": args.nodes, "n_train": args.n_train,
    }
    _write_manifest(out, "sweep-l", cfg_snapshot, inputs,
                    ["sweep_cells.csv", "sweep_summary.csv", "manifest.json"])
    for (l, label), m in means.items():
        print(f"L={l} filter={label} mean accuracy {m:.4f}")
    return EXIT_OK


def cmd_sweep_nodes(args) -> int:
    _, sets, inputs = _load_corpus(args)
    restrict = _mask_from_nodes(sets[0].node_labels, args.nodes)
    if restrict is not None:
        sets = [select_nodes(ms, restrict) for ms in sets]
    filt = _parse_filter(args.filter, args.hmm_eps, args.hmm_chain)
    result = sweep_node_masks(sets, l=args.l, filter_spec=filt, n_train=args.n_train,
                              k=args.k, jobs=args.jobs)
    node_labels = sets[0].node_labels

    out = _out_dir(args)
    lines = ["mask_bits,nodes,n_nodes,mean_accuracy"]
    for ma in result.per_mask:
        names = "+".join(ma.mask.names(node_labels))
        lines.append(f"{ma.mask.bits},{names},{ma.mask.popcount()},{ma.mean_accuracy:.6f}")
    (out / "mask_accuracy.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    counts, edges = result.histogram(bins=args.bins)
    lines = ["bin_low,bin_high,count"]
    for i, c in enumerate(counts):
        lines.append(f"{edges[i]:.6f},{edges[i + 1]:.6f},{int(c)}")
    (out / "mask_histogram.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    cfg_snapshot = {
        "l": args.l, "filter": filt.label, "k": args.k, "n_train": args.n_train,
        "nodes": args.nodes, "bins": args.bins,
    }
    _write_manifest(out, "sweep-nodes", cfg_snapshot, inputs,
                    ["mask_accuracy.csv", "mask_histogram.csv", "manifest.json"])
    best = sorted(result.per_mask, key=lambda ma: (-ma.mean_accuracy, ma.mask.bits))[:5]
    for ma in best:
        print(f"{'+'.join(ma.mask.names(node_labels))}: {ma.mean_accuracy:.4f}")
    return EXIT_OK


def cmd_filter(args) -> int:
    if (args.hmm is None) == (args.median is None):
        raise ConfigError("pass exactly one of --hmm MODEL or --median M")
    pred_path = Path(args.predictions)
    if not pred_path.is_file():
        raise ConfigError(f"predictions file {args.predictions!r} does not exist")
    with open(pred_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "y_hat" not in reader.fieldnames:
            raise DataError(f"{pred_path.name}: no y_hat column")
        rows = list(reader)
    if not rows:
        raise DataError(f"{pred_path.name}: no rows")
    grouped = "split" in reader.fieldnames and "val_id" in reader.fieldnames

    try:
        y = np.array([int(r["y_hat"]) for r in rows], dtype=np.int64)
    except ValueError:
        raise DataError(f"{pred_path.name}: y_hat must be integers") from None

    if args.hmm is not None:
        model_path = Path(args.hmm)
        if not model_path.is_file():
            raise ConfigError(f"model file {args.hmm!r} does not exist")
        model = Hmm.load(model_path)

        def smooth(seq):
            return hmm_filter(model, seq)
    else:
        if args.median < 0:
            raise ConfigError(f"--median must be >= 0, got {args.median}")

        def smooth(seq):
            return median_filter(seq, args.median)

    # Consecutive rows with the same (split, val_id) form one causal stream.
    z = np.empty_like(y)
    start = 0
    for i in range(1, len(rows) + 1):
        boundary = i == len(rows) or (
            grouped and (rows[i]["split"], rows[i]["val_id"]) != (rows[start]["split"], rows[start]["val_id"])
        )
        if boundary:
            z[start:i] = smooth(y[start:i])
            start = i

    fields = list(reader.fieldnames)
    if "z_hat" not in fields:
        fields.append("z_hat")
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for r, zv in zip(rows, z):
            r["z_hat"] = str(int(zv))
            writer.writerow(r)
    print(f"filtered {len(rows)} predictions to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    paths = [Path(p) for p in args.files]
    if args.data:
        data = Path(args.data)
        if not data.is_dir():
            raise ConfigError(f"data directory {args.data!r} does not exist")
        paths.extend(sorted(data.glob("*.csv")))
    if not paths:
        raise ConfigError("nothing to validate; pass files or --data DIR")
    failures = 0
    for p in paths:
        try:
            ms = load_set(p)
        except (DataError, OSError) as e:
            print(f"FAIL {p}: {e}")
            failures += 1
        else:
            labeled = "labeled" if ms.is_fully_labeled() else "partially labeled"
            print(f"OK {p}: {len(ms)} frames, {ms.n_nodes} nodes, {labeled}")
    return EXIT_DATA if failures else EXIT_OK


def _add_common_eval_args(p) -> None:
    p.add_argument("--data", help=f"directory of set CSVs (default: ${DATA_DIR_ENV})")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--k", type=int, default=5, help="neighbor count (default 5)")
    p.add_argument("--n-train", type=int, default=DEFAULT_N_TRAIN,
                   help=f"training sets per split (default {DEFAULT_N_TRAIN})")
    p.add_argument("--hmm-eps", type=float, default=DEFAULT_EPS,
                   help=f"count smoothing for hmm filters (default {DEFAULT_EPS})")
    p.add_argument("--hmm-chain", action="store_true",
                   help="forbid direct hops between non-adjacent cells")
    p.add_argument("--nodes", help="comma-separated node names to use (default all)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellloc",
        description="Cell-level indoor/outdoor localization from RSSI traces.",
    )
    parser.add_argument("--version", action="version", version=f"cellloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate synthetic labeled recordings")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sets", type=int, default=6, help="number of recordings (default 6)")
    p.add_argument("--seed", type=int, default=0, help="generation seed (default 0)")
    p.add_argument("--scenario", help="scenario JSON (default: built-in scenario)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="run the pipeline over every train/validation split")
    _add_common_eval_args(p)
    p.add_argument("--l", type=int, default=2, help="moment window length (default 2)")
    p.add_argument("--filter", default="none", choices=["none", "median", "hmm"],
                   help="second stage (default none)")
    p.add_argument("--median-m", type=int, default=None,
                   help="median window extent (implies --filter median)")
    p.add_argument("--no-standardize", action="store_true", help="skip feature z-scoring")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-l", help="sweep moment window lengths and filters")
    _add_common_eval_args(p)
    p.add_argument("--l-values", default="1,2,5", help="comma list of L (default 1,2,5)")
    p.add_argument("--filters", default="none,median:5,hmm",
                   help="comma list of filters (default none,median:5,hmm)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.set_defaults(func=cmd_sweep_l)

    p = sub.add_parser("sweep-nodes", help="evaluate every sniffer subset")
    _add_common_eval_args(p)
    p.add_argument("--l", type=int, default=2, help="moment window length (default 2)")
    p.add_argument("--filter", default="none", help="second stage (default none)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--bins", type=int, default=20, help="histogram bins (default 20)")
    p.set_defaults(func=cmd_sweep_nodes)

    p = sub.add_parser("filter", help="smooth a saved prediction stream")
    p.add_argument("--predictions", required=True, help="predictions CSV with a y_hat column")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--hmm", help="saved model JSON to filter with")
    p.add_argument("--median", type=int, help="median window extent to filter with")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("validate", help="check recording files against the data contract")
    p.add_argument("files", nargs="*", help="CSV files to check")
    p.add_argument("--data", help="also check every CSV in this directory")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001 - contract: unexpected failure exits 4
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
