"""Command-line front end.

Subcommands: explain, oracle, groups, ablate, baselines, serve, coordinate,
eval.  Identical configurations and seeds produce byte-identical output files
regardless of the worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import io
from .ablation import ablation_curve
from .baselines import BaselineSet, cluster_baseline_set, kmeans_fit, uniform_sample
from .chain import AttributionReport, chain_with_distribution
from .distributed import (
    NodeTCPServer,
    TcpTransport,
    coordinate,
    load_registry,
    serve_node,
)
from .errors import ChainAttrError
from .groups import group_attr
from .oracle import interventional_shapley
from .pipeline import Pipeline, TransformStage, evaluate


def _add_io_args(p, output=True):
    p.add_argument("--pipeline", required=True, help="pipeline document (JSON)")
    p.add_argument("--data", required=True, help="feature data (CSV with header)")
    if output:
        p.add_argument("--output", required=True, help="output file path")
        p.add_argument("--format", choices=("json", "csv"), default="json")


def _add_selector_args(p):
    p.add_argument("--explicands", default="all", help="'all' or comma-separated ids")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--baseline-ids", help="comma-separated sample ids")
    g.add_argument("--uniform", type=int, metavar="N", help="sample N baselines")
    g.add_argument(
        "--kmeans",
        type=int,
        metavar="K",
        help="use the explicand's k-means cluster as its baselines (k=8 is a "
        "reasonable default for demographic-style reduced features)",
    )
    p.add_argument("--seed", type=int, default=0, help="seed for baseline sampling")
    p.add_argument(
        "--reduced-features",
        help="comma-separated feature names to cluster on (with --kmeans); "
        "features are clustered unscaled",
    )
    p.add_argument("--labels", metavar="COL", help="label column (used by bce_loss)")
    p.add_argument(
        "--as",
        dest="output_as",
        choices=("logodds", "probability", "loss"),
        default="logodds",
        help="explain the raw (log-odds) output, its probability, or its loss",
    )
    p.add_argument("--workers", type=int, default=1)


def build_parser():
    ap = argparse.ArgumentParser(
        prog="chainattr",
        description="Feature attributions propagated through pipelines of models",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="chain attributions over a baseline set")
    _add_io_args(p)
    _add_selector_args(p)
    p.add_argument("--groups", help="group spec (JSON); emit grouped attributions")

    p = sub.add_parser("oracle", help="brute-force Shapley attributions (m <= 20)")
    _add_io_args(p)
    _add_selector_args(p)

    p = sub.add_parser("groups", help="aggregate a report into feature groups")
    p.add_argument("--report", required=True, help="report JSON from 'explain'")
    p.add_argument("--groups", required=True, help="group spec (JSON)")
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("ablate", help="ablation curve for chain attributions")
    _add_io_args(p)
    _add_selector_args(p)
    p.add_argument("--sign", choices=("pos", "neg"), required=True)
    p.add_argument("--kmax", type=int, required=True)

    p = sub.add_parser("baselines", help="fit k-means or draw a uniform baseline set")
    p.add_argument("--data", required=True)
    p.add_argument("--kmeans", type=int, metavar="K")
    p.add_argument("--uniform", type=int, metavar="N")
    p.add_argument("--reduced-features")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)

    p = sub.add_parser("serve", help="serve one institution's private model")
    p.add_argument("--pipeline", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--score", required=True, help="score name this model produces")
    p.add_argument("--baselines", required=True, help="shared baseline set (JSON)")
    p.add_argument("--node-id", default="node")
    p.add_argument("--port", type=int, default=0)

    p = sub.add_parser("coordinate", help="distributed explanation via node services")
    _add_io_args(p)
    p.add_argument("--registry", required=True, help="node registry (JSON list)")
    p.add_argument("--baselines", required=True, help="shared baseline set (JSON)")
    p.add_argument("--explicands", default="all")
    p.add_argument("--labels", metavar="COL")

    p = sub.add_parser("eval", help="forward traces for samples")
    _add_io_args(p)
    p.add_argument("--explicands", default="all")
    p.add_argument("--labels", metavar="COL")
    return ap


# ---------------------------------------------------------------------------
# shared plumbing


def _load_inputs(args):
    pipeline = io.load_pipeline(args.pipeline)
    data = io.load_dataset(args.data)
    labels = None
    if getattr(args, "labels", None):
        labels = dict(zip(data.ids, data.column(args.labels)))
        data = data.drop_column(args.labels)
    return pipeline, data, labels


def _apply_output_transform(pipeline, args):
    """--as appends transform stages; the loaded pipeline must emit log-odds."""
    mode = getattr(args, "output_as", "logodds")
    if mode == "logodds":
        return pipeline
    stages = list(pipeline.stages) + [TransformStage("sigmoid")]
    if mode == "loss":
        if not getattr(args, "labels", None):
            raise ValueError("--as loss requires --labels")
        stages.append(TransformStage("bce_loss"))
    return Pipeline(stages)


def _explicand_ids(args, data):
    if args.explicands == "all":
        return list(data.ids)
    ids = [s for s in args.explicands.split(",") if s]
    for eid in ids:
        data.row_by_id(eid)  # fail early with a clear message
    return ids


def _baseline_selector(args, data):
    """Returns explicand_id -> BaselineSet (constant unless k-means)."""
    if args.baseline_ids:
        ids = [s for s in args.baseline_ids.split(",") if s]
        rows = np.stack([data.row_by_id(i) for i in ids])
        bset = BaselineSet.from_samples(rows, sample_ids=ids, provenance={"kind": "ids"})
        return lambda eid: bset
    if args.uniform is not None:
        bset = uniform_sample(data.X, args.uniform, args.seed, sample_ids=data.ids)
        return lambda eid: bset
    if args.kmeans is not None:
        if not args.reduced_features:
            raise ValueError("--kmeans requires --reduced-features")
        names = args.reduced_features.split(",")
        reduced = data.select_columns(names)
        model = kmeans_fit(
            reduced.X, args.kmeans, seed=args.seed, feature_names=names
        )
        pos = [data.feature_names.index(n) for n in names]

        def per_explicand(eid):
            x = data.row_by_id(eid)[pos]
            return cluster_baseline_set(model, data.X, x, sample_ids=data.ids)

        return per_explicand
    raise ValueError(
        "choose a baseline selector: --baseline-ids, --uniform, or --kmeans"
    )


def _parallel_map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _write_reports(args, reports):
    text = (
        io.reports_to_json(reports)
        if args.format == "json"
        else io.reports_to_csv(reports)
    )
    io.write_text(args.output, text)


def _group_and_write(args, reports, spec):
    entries = [(r, group_attr(r.phi, spec)) for r in reports]
    text = (
        io.group_reports_to_json(entries)
        if args.format == "json"
        else io.group_reports_to_csv(entries)
    )
    io.write_text(args.output, text)


# ---------------------------------------------------------------------------
# commands


def _cmd_explain(args):
    pipeline, data, labels = _load_inputs(args)
    pipeline = _apply_output_transform(pipeline, args)
    ids = _explicand_ids(args, data)
    select = _baseline_selector(args, data)

    def one(eid):
        return chain_with_distribution(
            pipeline,
            data.row_by_id(eid),
            select(eid),
            label=None if labels is None else labels[eid],
            explicand_id=eid,
            feature_names=data.feature_names,
        )

    reports = _parallel_map(one, ids, args.workers)
    if args.groups:
        spec = io.load_group_spec(args.groups, feature_names=data.feature_names)
        _group_and_write(args, reports, spec)
    else:
        _write_reports(args, reports)
    return 0


def _cmd_oracle(args):
    pipeline, data, labels = _load_inputs(args)
    pipeline = _apply_output_transform(pipeline, args)
    ids = _explicand_ids(args, data)
    select = _baseline_selector(args, data)

    def one(eid):
        bset = select(eid)
        label = None if labels is None else labels[eid]
        phi = interventional_shapley(pipeline, data.row_by_id(eid), bset, label=label)
        expected = float(np.mean(pipeline.forward(bset.samples, labels=label)[:, 0]))
        return AttributionReport(
            explicand_id=eid,
            phi=phi,
            expected_value=expected,
            baseline_set_id=bset.id,
            flags={},
            feature_names=list(data.feature_names),
        )

    reports = _parallel_map(one, ids, args.workers)
    _write_reports(args, reports)
    return 0


def _cmd_groups(args):
    with open(args.report, "r", encoding="utf-8") as fh:
        docs = json.load(fh)
    reports = []
    feature_names = None
    for doc in docs:
        names = [a["feature"] for a in doc["attributions"]]
        feature_names = feature_names or names
        reports.append(
            AttributionReport(
                explicand_id=doc["explicand_id"],
                phi=np.array([a["value"] for a in doc["attributions"]]),
                expected_value=doc["expected_value"],
                baseline_set_id=doc["baseline_set_id"],
                flags=doc.get("flags", {}),
                feature_names=names,
            )
        )
    spec = io.load_group_spec(args.groups, feature_names=tuple(feature_names or ()))
    _group_and_write(args, reports, spec)
    return 0


def _cmd_ablate(args):
    pipeline, data, labels = _load_inputs(args)
    pipeline = _apply_output_transform(pipeline, args)
    ids = _explicand_ids(args, data)
    select = _baseline_selector(args, data)
    bsets = [select(eid) for eid in ids]
    if len({b.id for b in bsets}) != 1:
        raise ValueError(
            "ablation needs one shared baseline set; these explicands fall in "
            "different k-means clusters"
        )
    bset = bsets[0]

    def one(eid):
        return chain_with_distribution(
            pipeline,
            data.row_by_id(eid),
            bset,
            label=None if labels is None else labels[eid],
            explicand_id=eid,
            feature_names=data.feature_names,
        )

    reports = _parallel_map(one, ids, args.workers)
    phi = np.stack([r.phi for r in reports])
    X = np.stack([data.row_by_id(eid) for eid in ids])
    impute = bset.samples.mean(axis=0)
    sign = "positive" if args.sign == "pos" else "negative"
    label_vec = None if labels is None else np.array([labels[eid] for eid in ids])
    curve = ablation_curve(
        pipeline, X, phi, impute, sign, args.kmax, labels=label_vec
    )
    rows = curve.to_rows()
    if args.format == "csv":
        text = "k,mean_output,sign\n" + "\n".join(
            f"{k},{io.canon_float(v)},{s}" for k, v, s in rows
        ) + "\n"
    else:
        text = io.canon_json(
            [{"k": k, "mean_output": v, "sign": s} for k, v, s in rows]
        ) + "\n"
    io.write_text(args.output, text)
    return 0


def _cmd_baselines(args):
    data = io.load_dataset(args.data)
    if (args.kmeans is None) == (args.uniform is None):
        raise ValueError("choose exactly one of --kmeans or --uniform")
    if args.uniform is not None:
        bset = uniform_sample(data.X, args.uniform, args.seed, sample_ids=data.ids)
        io.write_text(args.output, io.canon_json(bset.to_doc()) + "\n")
        return 0
    if not args.reduced_features:
        raise ValueError("--kmeans requires --reduced-features")
    names = args.reduced_features.split(",")
    model = kmeans_fit(
        data.select_columns(names).X, args.kmeans, seed=args.seed, feature_names=names
    )
    doc = model.to_doc()
    doc["cluster_sample_ids"] = [
        [data.ids[i] for i in np.nonzero(model.assignments == c)[0]]
        for c in range(model.k)
    ]
    io.write_text(args.output, io.canon_json(doc) + "\n")
    return 0


def _load_baseline_doc(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if "id" not in doc or "sample_ids" not in doc:
        raise ValueError(f"{path}: baseline set file needs 'id' and 'sample_ids'")
    return doc


def _cmd_serve(args):
    pipeline = io.load_pipeline(args.pipeline)
    data = io.load_dataset(args.data)
    bdoc = _load_baseline_doc(args.baselines)
    node = serve_node(pipeline, data, bdoc["id"], args.score, node_id=args.node_id)
    server = NodeTCPServer(node, port=args.port).start()
    print(f"serving {args.node_id} ({args.score}) on {server.endpoint}", flush=True)
    try:
        server.join()
    except KeyboardInterrupt:
        server.stop()
    return 0


def _cmd_coordinate(args):
    meta = io.load_pipeline(args.pipeline)
    data = io.load_dataset(args.data)
    labels = None
    if args.labels:
        labels = dict(zip(data.ids, data.column(args.labels)))
        data = data.drop_column(args.labels)
    registry = load_registry(args.registry)
    bdoc = _load_baseline_doc(args.baselines)
    ids = (
        list(data.ids)
        if args.explicands == "all"
        else [s for s in args.explicands.split(",") if s]
    )
    result = coordinate(
        meta, data, registry, ids, bdoc, TcpTransport(), labels=labels
    )
    _write_reports(args, result.reports)
    for eid, reason in result.failures.items():
        print(f"failed explicand {eid}: {reason}", file=sys.stderr)
    return 0 if not result.failures else 1


def _cmd_eval(args):
    pipeline, data, labels = _load_inputs(args)
    ids = _explicand_ids(args, data)
    docs = []
    for eid in ids:
        trace = evaluate(
            pipeline,
            data.row_by_id(eid),
            label=None if labels is None else labels[eid],
        )
        docs.append(
            {"id": eid, "trace": [[float(v) for v in e] for e in trace.entries]}
        )
    if args.format == "json":
        text = io.canon_json(docs) + "\n"
    else:
        width = len(docs[0]["trace"][-1])
        header = "id," + ",".join(f"out{i}" for i in range(width))
        lines = [header] + [
            d["id"] + "," + ",".join(io.canon_float(v) for v in d["trace"][-1])
            for d in docs
        ]
        text = "\n".join(lines) + "\n"
    io.write_text(args.output, text)
    return 0


_COMMANDS = {
    "explain": _cmd_explain,
    "oracle": _cmd_oracle,
    "groups": _cmd_groups,
    "ablate": _cmd_ablate,
    "baselines": _cmd_baselines,
    "serve": _cmd_serve,
    "coordinate": _cmd_coordinate,
    "eval": _cmd_eval,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ChainAttrError, ValueError, KeyError, OSError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
