"""Command-line pipeline: extract -> split -> train -> evaluate / predict.

Stages communicate through files (instance CSVs and the binary model), so
each one is independently runnable and re-runnable; all randomness is
seeded (default seed 1 everywhere) and every command is deterministic given
its flags.  Diagnostics go to stderr, data to files or stdout.

Exit codes: 0 success, 2 usage or input-format error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
import traceback

from . import dataset as ds
from . import figures
from . import forest as rf
from .errors import FormatError
from .evaluate import evaluate as evaluate_forest
from .evaluate import per_device_report, write_confusion_csv, write_summary
from .fingerprint import ExtractionConfig, extract_instances
from .ingest import CaptureStats, MacAddress, ingest_pcap, ingest_trace_csv

_PCAP_MAGICS = {b"\xa1\xb2\xc3\xd4", b"\xd4\xc3\xb2\xa1", b"\xa1\xb2\x3c\x4d", b"\x4d\x3c\xb2\xa1"}


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def read_device_map(path: str) -> tuple[dict[MacAddress, str], dict[str, str]]:
    """Read ``mac,label[,category]`` (header required, MACs unique).

    Returns the MAC->device-label map and the device-label->category map
    (empty when no category column is present).
    """
    labels: dict[MacAddress, str] = {}
    categories: dict[str, str] = {}
    with open(path, "r", encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: missing header row") from None
        if header[:2] != ["mac", "label"] or (len(header) > 2 and header[2] != "category"):
            raise FormatError(f"{path}: expected header 'mac,label[,category]'")
        has_category = len(header) > 2
        for row_no, row in enumerate(reader, start=2):
            if len(row) < 2 or not row[1].strip():
                raise FormatError(f"{path}:{row_no}: expected 'mac,label[,category]'")
            try:
                mac = MacAddress.parse(row[0])
            except ValueError as exc:
                raise FormatError(f"{path}:{row_no}: {exc}") from None
            if mac in labels:
                raise FormatError(f"{path}:{row_no}: duplicate MAC {mac}")
            labels[mac] = row[1].strip()
            if has_category and len(row) > 2 and row[2].strip():
                categories[labels[mac]] = row[2].strip()
    if not labels:
        raise FormatError(f"{path}: device map has no entries")
    return labels, categories


def _ingest_any(path: str) -> tuple[list, CaptureStats]:
    if path.endswith((".pcap", ".cap")):
        return ingest_pcap(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head in _PCAP_MAGICS:
        return ingest_pcap(path)
    return ingest_trace_csv(path)


def cmd_extract(args: argparse.Namespace) -> int:
    device_labels, categories = read_device_map(args.device_map)
    if args.label_by == "category":
        uncovered = sorted({label for label in device_labels.values() if label not in categories})
        if uncovered:
            raise FormatError(
                f"{args.device_map}: --label-by category needs a category for: "
                + ", ".join(uncovered)
            )
        device_labels = {mac: categories[label] for mac, label in device_labels.items()}
    records = []
    for path in sorted(args.inputs):
        file_records, stats = _ingest_any(path)
        records.extend(file_records)
        _log(
            f"{path}: seen={stats.packets_seen} kept={stats.packets_kept} "
            f"non_tcp_ipv4={stats.packets_skipped_non_tcp_ipv4} "
            f"malformed={stats.packets_skipped_malformed}"
        )
    config = ExtractionConfig(window_size=args.window)
    instances, report = extract_instances(records, device_labels, config)
    data = ds.Dataset(instances)
    if args.dedupe:
        data, removed = ds.dedupe(data)
        _log(f"dedupe: removed {removed} duplicate instance(s)")
    for mac in sorted(report.per_device):
        counts = report.per_device[mac]
        _log(f"{mac} [{counts.label}]: packets={counts.packets} instances={counts.instances}")
    if report.unlabeled_packets:
        _log(f"ignored {report.unlabeled_packets} packet(s) from unlabeled MACs")
    ds.write_instances(data, args.output)
    _log(f"wrote {len(data)} instance(s) to {args.output}")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    data = ds.read_instances(args.instances)
    spec = ds.SplitSpec(train_fraction=args.fraction, seed=args.seed)
    splitter = ds.split_stratified if args.stratify else ds.split
    train_set, test_set = splitter(data, spec)
    ds.write_instances(train_set, args.train_out)
    ds.write_instances(test_set, args.test_out)
    _log(f"split {len(data)} -> train={len(train_set)} test={len(test_set)} (seed={args.seed})")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    data = ds.read_instances(args.train)
    params = rf.ForestParams(
        n_trees=args.trees,
        mtry=args.mtry,
        min_leaf=args.min_leaf,
        max_depth=args.max_depth,
    )
    started = time.perf_counter()
    model = rf.train(data, params, seed=args.seed)
    elapsed = time.perf_counter() - started
    rf.save_model(model, args.output)
    _log(
        f"trained trees={params.n_trees} mtry={params.mtry} min_leaf={params.min_leaf} "
        f"max_depth={'unlimited' if params.max_depth is None else params.max_depth} "
        f"seed={args.seed} on {len(data)} instance(s) in {elapsed:.2f}s -> {args.output}"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    model = rf.load_model(args.model)
    test_set = ds.read_instances(args.test)
    report = evaluate_forest(model, test_set)
    os.makedirs(args.outdir, exist_ok=True)
    per_device_report(report, os.path.join(args.outdir, "report.csv"))
    write_confusion_csv(report, os.path.join(args.outdir, "confusion.csv"))
    write_summary(report, model, os.path.join(args.outdir, "summary.txt"))
    written = ["report.csv", "confusion.csv", "summary.txt"]
    if not args.no_figures:
        for path in figures.render_eval_figures(report, args.outdir):
            written.append(os.path.basename(path))
    _log(f"accuracy={report.accuracy:.6f} rmse={report.rmse:.6f} n_test={report.n_test}")
    _log(f"wrote {', '.join(written)} to {args.outdir}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model = rf.load_model(args.model)
    data = ds.read_instances(args.instances)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("row_index", "predicted_label", "vote_fraction"))
        for i, inst in enumerate(data.instances):
            proba = rf.predict_proba(model, inst.fingerprint)
            label = rf.predict(model, inst.fingerprint)
            writer.writerow((i, label, repr(proba[label])))
    _log(f"wrote {len(data)} prediction(s) to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netprint",
        description="Passive device fingerprinting from packet captures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "extract",
        help="dissect captures/trace CSVs into labeled fingerprint instances",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("inputs", nargs="+", help="pcap or trace CSV files (processed in name order)")
    p.add_argument("--device-map", required=True, help="CSV mac,label[,category]")
    p.add_argument("--label-by", choices=("device", "category"), default="device",
                   help="label instances by device name or by its category")
    p.add_argument("--window", type=int, default=5, help="packets per instance")
    p.add_argument("--dedupe", action="store_true",
                   help="drop exact duplicate instances (first occurrence kept)")
    p.add_argument("-o", "--output", required=True, help="instance CSV to write")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser(
        "split",
        help="shuffle instances into train/test CSVs",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("instances", help="instance CSV")
    p.add_argument("--fraction", type=float, default=0.8, help="training fraction")
    p.add_argument("--seed", type=int, default=1, help="shuffle seed")
    p.add_argument("--stratify", action="store_true", help="split each label separately")
    p.add_argument("--train-out", required=True, help="training CSV to write")
    p.add_argument("--test-out", required=True, help="test CSV to write")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser(
        "train",
        help="train the random forest on a training CSV",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("train", help="training instance CSV")
    p.add_argument("--trees", type=int, default=100, help="number of trees")
    p.add_argument("--seed", type=int, default=1, help="master training seed")
    p.add_argument("--mtry", type=int, default=2, help="features considered per node")
    p.add_argument("--min-leaf", type=int, default=1, help="minimum instances per leaf")
    p.add_argument("--max-depth", type=int, default=None, help="depth cap (default unlimited)")
    p.add_argument("-o", "--output", required=True, help="model file to write (.nfpt)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "evaluate",
        help="score a model on a test CSV and write report files + figures",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("model", help="model file from 'train'")
    p.add_argument("test", help="test instance CSV")
    p.add_argument("--outdir", required=True, help="directory for report files")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "predict",
        help="predict labels for an instance CSV",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("model", help="model file from 'train'")
    p.add_argument("instances", help="instance CSV (labels ignored)")
    p.add_argument("-o", "--output", required=True, help="prediction CSV to write")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return 2
    except Exception:  # pragma: no cover - internal invariant violations
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
