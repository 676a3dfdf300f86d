"""File formats: pipeline documents, CSV feature data, reports, group specs.

All emitted files use canonical rendering (17-significant-digit decimal
floats, fixed key order, LF newlines) so identical runs produce identical
bytes.
"""

from __future__ import annotations

import csv
import io as _io
import json
from dataclasses import dataclass

import numpy as np

from .errors import PipelineSpecError
from .groups import GroupSpec
from .pipeline import (
    ActivationStage,
    LinearStage,
    ParallelBlockStage,
    Pipeline,
    TransformStage,
    Tree,
    TreeEnsembleStage,
)

# ---------------------------------------------------------------------------
# canonical JSON


def canon_float(v):
    if not np.isfinite(v):
        raise ValueError(f"cannot serialize non-finite value {v!r}")
    s = format(float(v), ".17g")
    if "." not in s and "e" not in s and "n" not in s:
        s += ".0"
    return s


def canon_json(obj):
    """Deterministic JSON text: insertion-ordered keys, 17-digit floats."""
    out = _io.StringIO()
    _write_canon(obj, out)
    return out.getvalue()


def _write_canon(obj, out):
    if isinstance(obj, dict):
        out.write("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.write(", ")
            out.write(json.dumps(str(k)))
            out.write(": ")
            _write_canon(v, out)
        out.write("}")
    elif isinstance(obj, (list, tuple)):
        out.write("[")
        for i, v in enumerate(obj):
            if i:
                out.write(", ")
            _write_canon(v, out)
        out.write("]")
    elif isinstance(obj, bool):
        out.write("true" if obj else "false")
    elif obj is None:
        out.write("null")
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.write(canon_float(obj))
    else:
        out.write(json.dumps(str(obj)))


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# pipeline documents

_STAGE_FIELDS = {
    "linear": {"kind", "weights", "bias"},
    "activation": {"kind", "activation"},
    "tree_ensemble": {"kind", "trees", "tree_weights", "base_score"},
    "transform": {"kind", "transform"},
    "parallel_block": {"kind", "blocks", "passthrough"},
}


def _reject_unknown(obj, allowed, where):
    unknown = set(obj) - allowed
    if unknown:
        raise PipelineSpecError(
            f"unknown field(s) {sorted(unknown)}", location=where
        )


def _tree_from_doc(doc, where):
    _reject_unknown(doc, {"nodes", "root"}, where)
    nodes = doc.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        raise PipelineSpecError("tree needs a non-empty 'nodes' list", location=where)
    n = len(nodes)
    feature = np.full(n, -1, dtype=np.intp)
    threshold = np.zeros(n)
    left = np.full(n, -1, dtype=np.intp)
    right = np.full(n, -1, dtype=np.intp)
    value = np.zeros(n)
    for i, node in enumerate(nodes):
        loc = f"{where}.nodes[{i}]"
        if "value" in node:
            _reject_unknown(node, {"value"}, loc)
            value[i] = float(node["value"])
        else:
            _reject_unknown(node, {"feature", "threshold", "left", "right"}, loc)
            try:
                feature[i] = int(node["feature"])
                threshold[i] = float(node["threshold"])
                left[i] = int(node["left"])
                right[i] = int(node["right"])
            except KeyError as e:
                raise PipelineSpecError(f"internal node missing {e}", location=loc)
    try:
        return Tree(feature, threshold, left, right, value, root=int(doc.get("root", 0)))
    except ValueError as e:
        raise PipelineSpecError(str(e), location=where)


def _stage_from_doc(doc, prev_width, where):
    if not isinstance(doc, dict):
        raise PipelineSpecError("stage must be an object", location=where)
    kind = doc.get("kind")
    if kind not in _STAGE_FIELDS:
        raise PipelineSpecError(f"unknown stage kind {kind!r}", location=where)
    _reject_unknown(doc, _STAGE_FIELDS[kind], where)
    try:
        if kind == "linear":
            return LinearStage(doc["weights"], doc.get("bias"))
        if kind == "activation":
            if prev_width is None:
                raise PipelineSpecError(
                    "an activation cannot be the first stage (width unknown); "
                    "prepend an identity linear stage",
                    location=where,
                )
            return ActivationStage(doc.get("activation"), prev_width)
        if kind == "transform":
            return TransformStage(doc.get("transform"))
        if kind == "tree_ensemble":
            trees = [
                _tree_from_doc(t, f"{where}.trees[{i}]")
                for i, t in enumerate(doc.get("trees", []))
            ]
            return TreeEnsembleStage(
                trees,
                doc.get("tree_weights"),
                doc.get("base_score", 0.0),
                input_width=prev_width,
            )
        blocks = []
        for i, b in enumerate(doc.get("blocks", [])):
            bwhere = f"{where}.blocks[{i}]"
            _reject_unknown(b, {"stages", "inputs", "outputs"}, bwhere)
            sub = _pipeline_from_stages(b.get("stages", []), bwhere)
            blocks.append((sub, b["inputs"], b["outputs"]))
        return ParallelBlockStage(
            blocks, doc.get("passthrough", ()), input_width=prev_width
        )
    except PipelineSpecError:
        raise
    except (KeyError, ValueError, TypeError) as e:
        raise PipelineSpecError(str(e), location=where)


def _pipeline_from_stages(stage_docs, where):
    if not isinstance(stage_docs, list) or not stage_docs:
        raise PipelineSpecError("'stages' must be a non-empty list", location=where)
    stages = []
    prev_width = None
    for i, doc in enumerate(stage_docs):
        stage = _stage_from_doc(doc, prev_width, f"{where}[{i}]")
        stages.append(stage)
        prev_width = stage.output_width
    return Pipeline(stages)


def pipeline_from_doc(doc):
    if not isinstance(doc, dict):
        raise PipelineSpecError("pipeline document must be an object")
    _reject_unknown(doc, {"stages"}, "pipeline")
    return _pipeline_from_stages(doc.get("stages"), "stages")


def load_pipeline(path):
    """Parse and validate a pipeline document; all Pipeline invariants hold."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise PipelineSpecError(
                f"invalid JSON: {e.msg}", location=f"{path}:{e.lineno}:{e.colno}"
            )
    return pipeline_from_doc(doc)


def _tree_to_doc(tree):
    nodes = []
    for i in range(len(tree.feature)):
        if tree.feature[i] < 0:
            nodes.append({"value": float(tree.value[i])})
        else:
            nodes.append(
                {
                    "feature": int(tree.feature[i]),
                    "threshold": float(tree.threshold[i]),
                    "left": int(tree.left[i]),
                    "right": int(tree.right[i]),
                }
            )
    return {"nodes": nodes, "root": int(tree.root)}


def pipeline_to_doc(pipeline):
    stages = []
    for stage in pipeline.stages:
        if isinstance(stage, LinearStage):
            stages.append(
                {
                    "kind": "linear",
                    "weights": [[float(v) for v in row] for row in stage.weights],
                    "bias": [float(v) for v in stage.bias],
                }
            )
        elif isinstance(stage, ActivationStage):
            stages.append({"kind": "activation", "activation": stage.fn_name})
        elif isinstance(stage, TransformStage):
            stages.append({"kind": "transform", "transform": stage.transform})
        elif isinstance(stage, TreeEnsembleStage):
            stages.append(
                {
                    "kind": "tree_ensemble",
                    "trees": [_tree_to_doc(t) for t in stage.trees],
                    "tree_weights": [float(w) for w in stage.tree_weights],
                    "base_score": float(stage.base_score),
                }
            )
        elif isinstance(stage, ParallelBlockStage):
            stages.append(
                {
                    "kind": "parallel_block",
                    "blocks": [
                        {
                            "stages": pipeline_to_doc(pipe)["stages"],
                            "inputs": [int(i) for i in ins],
                            "outputs": [int(o) for o in outs],
                        }
                        for pipe, ins, outs in stage.blocks
                    ],
                    "passthrough": [[int(i), int(j)] for i, j in stage.passthrough],
                }
            )
        else:
            raise TypeError(f"cannot serialize stage kind {stage.kind!r}")
    return {"stages": stages}


def dump_pipeline(pipeline, path):
    write_text(path, canon_json(pipeline_to_doc(pipeline)) + "\n")


# ---------------------------------------------------------------------------
# feature data (CSV with a header; first column may be a sample id)


@dataclass(frozen=True)
class Dataset:
    ids: tuple
    feature_names: tuple
    X: np.ndarray

    def __len__(self):
        return self.X.shape[0]

    @property
    def width(self):
        return self.X.shape[1]

    def row_by_id(self, sample_id):
        try:
            return self.X[self.ids.index(str(sample_id))]
        except ValueError:
            raise KeyError(f"unknown sample id {sample_id!r}")

    def column(self, name):
        try:
            return self.X[:, self.feature_names.index(name)]
        except ValueError:
            raise KeyError(f"unknown column {name!r}")

    def select_columns(self, names):
        idx = [self.feature_names.index(n) for n in names]
        return Dataset(self.ids, tuple(names), self.X[:, idx])

    def drop_column(self, name):
        keep = [i for i, n in enumerate(self.feature_names) if n != name]
        if len(keep) == len(self.feature_names):
            raise KeyError(f"unknown column {name!r}")
        return Dataset(
            self.ids, tuple(self.feature_names[i] for i in keep), self.X[:, keep]
        )


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def load_dataset(path):
    """CSV with a header row; a non-numeric first column is taken as sample ids."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not body:
        raise ValueError(f"{path}: no data rows")
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise ValueError(
                f"{path}: row {r + 2} has {len(row)} fields, header has {len(header)}"
            )
    first = [row[0] for row in body]
    has_ids = header[0].lower() in ("id", "sample_id") or not all(
        _is_float(v) for v in first
    )
    start = 1 if has_ids else 0
    ids = tuple(first) if has_ids else tuple(str(i) for i in range(len(body)))
    names = tuple(header[start:])
    X = np.empty((len(body), len(names)))
    for r, row in enumerate(body):
        for c, cell in enumerate(row[start:]):
            try:
                X[r, c] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: row {r + 2}, column {names[c]!r}: "
                    f"cannot parse {cell!r} as a number"
                )
    return Dataset(ids=ids, feature_names=names, X=X)


def write_dataset(path, dataset):
    lines = ["id," + ",".join(dataset.feature_names)]
    for sid, row in zip(dataset.ids, dataset.X):
        lines.append(str(sid) + "," + ",".join(canon_float(v) for v in row))
    write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# reports and group specs


def reports_to_json(reports):
    return canon_json([r.to_doc() for r in reports]) + "\n"


def reports_to_csv(reports):
    """Wide form: one row per explicand, one column per feature."""
    if not reports:
        return "explicand_id\n"
    first = reports[0]
    names = first.feature_names or [f"x{i}" for i in range(len(first.phi))]
    lines = ["explicand_id," + ",".join(str(n) for n in names)]
    for r in reports:
        lines.append(r.explicand_id + "," + ",".join(canon_float(v) for v in r.phi))
    return "\n".join(lines) + "\n"


def group_reports_to_json(entries):
    docs = []
    for report, grouped in entries:
        doc = grouped.to_doc()
        doc["explicand_id"] = report.explicand_id
        doc["baseline_set_id"] = report.baseline_set_id
        docs.append(
            {
                "explicand_id": doc["explicand_id"],
                "attributions": doc["groups"],
                "normalization": doc["normalization"],
                "baseline_set_id": doc["baseline_set_id"],
                "flags": doc["flags"],
            }
        )
    return canon_json(docs) + "\n"


def group_reports_to_csv(entries):
    if not entries:
        return "explicand_id\n"
    names = entries[0][1].names
    lines = ["explicand_id," + ",".join(str(n) for n in names)]
    for report, grouped in entries:
        lines.append(
            report.explicand_id + "," + ",".join(canon_float(v) for v in grouped.values)
        )
    return "\n".join(lines) + "\n"


def load_group_spec(path, feature_names=None):
    """JSON {"groups": {name: [feature names or indices], ...}}."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "groups" not in doc:
        raise ValueError(f"{path}: group spec must be an object with a 'groups' field")
    groups = []
    for name, members in doc["groups"].items():
        idx = []
        for member in members:
            if isinstance(member, int):
                idx.append(member)
            elif feature_names is not None and member in feature_names:
                idx.append(feature_names.index(member))
            else:
                raise ValueError(
                    f"{path}: group {name!r} member {member!r} is not a feature"
                )
        groups.append((name, tuple(idx)))
    return GroupSpec(tuple(groups))
