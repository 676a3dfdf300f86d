"""Multi-party attribution: private sub-models, attribution scalars on the wire.

A coordinator owning the meta-model back-propagates attributions onto its
input features; for each input that is another party's score it sends that
party only the attribution scalar plus sample identifiers.  The owning node
runs the chain over its private model and its own feature columns, rescales
by its local score delta, and returns per-feature attributions.  No model
parameters or foreign feature values ever cross the wire, and the merged
result matches the centralized chain over the stitched pipeline.

Wire format: one JSON object per line, UTF-8, canonical field order, floats
as 17-significant-digit decimals.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from dataclasses import dataclass, field

import numpy as np

from .baselines import BaselineSet
from .chain import AttributionReport, chain_single_baseline, hadamard_div
from .errors import BaselineMismatchError, ChainAttrError, ProtocolError
from .io import canon_json

PROTOCOL_VERSION = 1
EFFICIENCY_RTOL = 1e-9

_REQ_FIELDS = ("v", "type", "baseline_set", "explicand", "baseline", "score", "value")
_RESP_FIELDS = (
    "v",
    "type",
    "baseline_set",
    "explicand",
    "baseline",
    "score",
    "attrs",
    "score_delta",
)
_ERR_FIELDS = ("v", "type", "code", "message")


@dataclass(frozen=True)
class ScoreAttributionRequest:
    baseline_set: str
    explicand: str
    baseline: str
    score: str
    value: float  # the chain's attribution onto this score feature


@dataclass(frozen=True)
class ScoreAttributionResponse:
    baseline_set: str
    explicand: str
    baseline: str
    score: str
    attrs: dict  # feature name -> attribution, sums to the request value
    score_delta: float


@dataclass(frozen=True)
class ErrorMessage:
    code: str
    message: str


def encode_message(msg):
    """One canonical JSON line (without the trailing newline)."""
    if isinstance(msg, ScoreAttributionRequest):
        doc = {
            "v": PROTOCOL_VERSION,
            "type": "req",
            "baseline_set": msg.baseline_set,
            "explicand": msg.explicand,
            "baseline": msg.baseline,
            "score": msg.score,
            "value": float(msg.value),
        }
    elif isinstance(msg, ScoreAttributionResponse):
        doc = {
            "v": PROTOCOL_VERSION,
            "type": "resp",
            "baseline_set": msg.baseline_set,
            "explicand": msg.explicand,
            "baseline": msg.baseline,
            "score": msg.score,
            "attrs": {str(k): float(v) for k, v in msg.attrs.items()},
            "score_delta": float(msg.score_delta),
        }
    elif isinstance(msg, ErrorMessage):
        doc = {
            "v": PROTOCOL_VERSION,
            "type": "err",
            "code": msg.code,
            "message": msg.message,
        }
    else:
        raise TypeError(f"cannot encode {type(msg).__name__}")
    return canon_json(doc)


def _require_fields(doc, fields):
    if tuple(doc.keys()) != fields and set(doc.keys()) != set(fields):
        missing = set(fields) - set(doc.keys())
        extra = set(doc.keys()) - set(fields)
        raise ProtocolError(
            f"malformed frame: missing {sorted(missing)}, unexpected {sorted(extra)}"
        )


def decode_message(line):
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"malformed frame: {e.msg}")
    if not isinstance(doc, dict):
        raise ProtocolError("malformed frame: not an object")
    if doc.get("v") != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {doc.get('v')!r}")
    mtype = doc.get("type")
    if mtype == "req":
        _require_fields(doc, _REQ_FIELDS)
        return ScoreAttributionRequest(
            baseline_set=str(doc["baseline_set"]),
            explicand=str(doc["explicand"]),
            baseline=str(doc["baseline"]),
            score=str(doc["score"]),
            value=float(doc["value"]),
        )
    if mtype == "resp":
        _require_fields(doc, _RESP_FIELDS)
        attrs = doc["attrs"]
        if not isinstance(attrs, dict):
            raise ProtocolError("malformed frame: attrs must be an object")
        return ScoreAttributionResponse(
            baseline_set=str(doc["baseline_set"]),
            explicand=str(doc["explicand"]),
            baseline=str(doc["baseline"]),
            score=str(doc["score"]),
            attrs={str(k): float(v) for k, v in attrs.items()},
            score_delta=float(doc["score_delta"]),
        )
    if mtype == "err":
        _require_fields(doc, _ERR_FIELDS)
        return ErrorMessage(code=str(doc["code"]), message=str(doc["message"]))
    raise ProtocolError(f"malformed frame: unknown type {mtype!r}")


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class NodeDescriptor:
    node_id: str
    scores: tuple  # score names this node's model produces
    features: tuple  # raw feature names this node owns
    endpoint: str  # "loopback:<node_id>" or "host:port"

    def to_doc(self):
        return {
            "node_id": self.node_id,
            "scores": list(self.scores),
            "features": list(self.features),
            "endpoint": self.endpoint,
        }


def validate_registry(nodes):
    scores, features = [], []
    for node in nodes:
        scores.extend(node.scores)
        features.extend(node.features)
    if len(set(scores)) != len(scores):
        raise ValueError("registry advertises a score name more than once")
    if len(set(features)) != len(features):
        raise ValueError("registry advertises a feature name more than once")
    return list(nodes)


def registry_from_doc(doc):
    nodes = [
        NodeDescriptor(
            node_id=str(d["node_id"]),
            scores=tuple(d["scores"]),
            features=tuple(d["features"]),
            endpoint=str(d["endpoint"]),
        )
        for d in doc
    ]
    return validate_registry(nodes)


def load_registry(path):
    with open(path, "r", encoding="utf-8") as fh:
        return registry_from_doc(json.load(fh))


# ---------------------------------------------------------------------------
# node side


class AttributionNode:
    """One institution's service: a private model over its own feature columns.

    Stateless across requests; every response is a pure function of the
    request, so a replay yields byte-identical bytes.
    """

    def __init__(self, node_id, pipeline, data, baseline_set_id, score_name):
        if pipeline.input_width != data.width:
            raise ValueError(
                f"node model takes {pipeline.input_width} features, "
                f"data has {data.width}"
            )
        self.node_id = node_id
        self.pipeline = pipeline
        self.data = data
        self.baseline_set_id = baseline_set_id
        self.score_name = score_name

    def handle(self, msg):
        if not isinstance(msg, ScoreAttributionRequest):
            return ErrorMessage("bad_request", "expected a score attribution request")
        if msg.baseline_set != self.baseline_set_id:
            return ErrorMessage(
                "baseline_mismatch",
                f"node {self.node_id} holds baseline set "
                f"{self.baseline_set_id[:12]}.., request names {msg.baseline_set[:12]}..",
            )
        if msg.score != self.score_name:
            return ErrorMessage(
                "unknown_score", f"node {self.node_id} does not produce {msg.score!r}"
            )
        try:
            x_e = self.data.row_by_id(msg.explicand)
            x_b = self.data.row_by_id(msg.baseline)
        except KeyError as e:
            return ErrorMessage("unknown_sample", str(e))
        try:
            trace = chain_single_baseline(self.pipeline, x_e, x_b)
        except (ChainAttrError, ValueError) as e:
            return ErrorMessage("node_error", str(e))
        delta = np.array([trace.f_explicand - trace.f_baseline])
        scale = hadamard_div(np.array([msg.value]), delta)[0]
        attrs = {
            name: float(v * scale)
            for name, v in zip(self.data.feature_names, trace.attribution)
        }
        return ScoreAttributionResponse(
            baseline_set=msg.baseline_set,
            explicand=msg.explicand,
            baseline=msg.baseline,
            score=msg.score,
            attrs=attrs,
            score_delta=float(delta[0]),
        )

    def handle_line(self, line):
        try:
            msg = decode_message(line)
        except ProtocolError as e:
            return encode_message(ErrorMessage("protocol", str(e)))
        return encode_message(self.handle(msg))


def serve_node(pipeline, data, baseline_set_id, score_name, node_id="node"):
    """Build the request handler for one node (wrap in a transport to expose it)."""
    return AttributionNode(node_id, pipeline, data, baseline_set_id, score_name)


class NodeTCPServer:
    """Newline-delimited JSON over TCP, one request per line, any connection count."""

    def __init__(self, node, host="127.0.0.1", port=0):
        handler_node = node

        class _Handler(socketserver.StreamRequestHandler):
            def handle(self):
                for raw in self.rfile:
                    line = raw.decode("utf-8").strip()
                    if not line:
                        continue
                    reply = handler_node.handle_line(line)
                    self.wfile.write((reply + "\n").encode("utf-8"))

        self._server = socketserver.ThreadingTCPServer((host, port), _Handler)
        self._server.daemon_threads = True
        self.address = self._server.server_address
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def endpoint(self):
        return f"{self.address[0]}:{self.address[1]}"

    def start(self):
        self._thread.start()
        return self

    def join(self):
        self._thread.join()

    def stop(self):
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


# ---------------------------------------------------------------------------
# transports (coordinator side)


class LoopbackTransport:
    """In-process transport for deterministic tests; optionally records frames."""

    def __init__(self, nodes=None, capture=None):
        self.nodes = dict(nodes or {})
        self.capture = capture

    def register(self, node):
        self.nodes[node.node_id] = node

    def request(self, endpoint, line):
        kind, _, name = endpoint.partition(":")
        if kind != "loopback" or name not in self.nodes:
            raise ConnectionError(f"no loopback node at {endpoint!r}")
        if self.capture is not None:
            self.capture.append((endpoint, "send", line))
        reply = self.nodes[name].handle_line(line)
        if self.capture is not None:
            self.capture.append((endpoint, "recv", reply))
        return reply


class TcpTransport:
    """One connection per request; simple and stateless."""

    def __init__(self, capture=None, timeout=10.0):
        self.capture = capture
        self.timeout = timeout

    def request(self, endpoint, line):
        host, _, port = endpoint.rpartition(":")
        if self.capture is not None:
            self.capture.append((endpoint, "send", line))
        with socket.create_connection((host, int(port)), timeout=self.timeout) as sock:
            sock.sendall((line + "\n").encode("utf-8"))
            buf = bytearray()
            while b"\n" not in buf:
                chunk = sock.recv(65536)
                if not chunk:
                    break
                buf.extend(chunk)
        reply = buf.split(b"\n", 1)[0].decode("utf-8")
        if self.capture is not None:
            self.capture.append((endpoint, "recv", reply))
        return reply


# ---------------------------------------------------------------------------
# coordinator side


@dataclass
class CoordinationResult:
    reports: list  # AttributionReport per successfully explained explicand
    raw_feature_names: tuple
    failures: dict = field(default_factory=dict)  # explicand id -> reason


def _expand_feature_space(meta_names, registry):
    """Raw feature order: each meta input, scores expanded to owner features."""
    owner_by_score = {}
    for node in registry:
        for s in node.scores:
            owner_by_score[s] = node
    raw_names = []
    for name in meta_names:
        if name in owner_by_score:
            raw_names.extend(owner_by_score[name].features)
        else:
            raw_names.append(name)
    return tuple(raw_names), owner_by_score


def coordinate(
    meta_pipeline,
    meta_data,
    registry,
    explicand_ids,
    baseline_set,
    transport,
    labels=None,
    keep_score_attrs=True,
):
    """Explain explicands in raw feature space without seeing foreign models.

    Per (explicand, baseline): run the chain over the meta-model, keep the
    attributions for own features, and fan the score attributions out to their
    owning nodes for private rescaling.  Merges are in fixed (explicand,
    baseline, score) order; an unreachable node fails only the affected
    explicands and the failure is reported rather than silently dropped.
    """
    registry = validate_registry(registry)
    if isinstance(baseline_set, BaselineSet):
        baseline_set_id, baseline_ids = baseline_set.id, list(baseline_set.sample_ids)
    else:
        baseline_set_id, baseline_ids = baseline_set["id"], list(baseline_set["sample_ids"])
    if not baseline_ids:
        raise ValueError("baseline set is empty; refusing to start")

    meta_names = meta_data.feature_names
    if meta_pipeline.input_width != len(meta_names):
        raise ValueError("meta model width does not match coordinator data")
    raw_names, owner_by_score = _expand_feature_space(meta_names, registry)
    raw_pos = {name: i for i, name in enumerate(raw_names)}

    reports, failures = [], {}
    for eid in explicand_ids:
        x_e = meta_data.row_by_id(eid)
        label = None if labels is None else labels[eid]
        per_baseline = []
        f_baselines = []
        degenerate = 0
        score_psi = {}
        try:
            for bid in baseline_ids:
                x_b = meta_data.row_by_id(bid)
                trace = chain_single_baseline(meta_pipeline, x_e, x_b, label=label)
                degenerate += trace.degenerate_divisions
                f_baselines.append(trace.f_baseline)
                raw_vec = np.zeros(len(raw_names))
                for c, name in enumerate(meta_names):
                    upstream = trace.attribution[c]
                    if name not in owner_by_score:
                        raw_vec[raw_pos[name]] += upstream
                        continue
                    score_psi.setdefault(name, []).append(float(upstream))
                    node = owner_by_score[name]
                    req = ScoreAttributionRequest(
                        baseline_set=baseline_set_id,
                        explicand=str(eid),
                        baseline=str(bid),
                        score=name,
                        value=float(upstream),
                    )
                    try:
                        reply = transport.request(node.endpoint, encode_message(req))
                    except (OSError, ConnectionError) as e:
                        raise _NodeFailure(f"node {node.node_id} unreachable: {e}")
                    resp = decode_message(reply)
                    if isinstance(resp, ErrorMessage):
                        if resp.code == "baseline_mismatch":
                            raise BaselineMismatchError(resp.message)
                        raise _NodeFailure(
                            f"node {node.node_id} refused: {resp.code}: {resp.message}"
                        )
                    _check_response(req, resp, node)
                    for fname, val in resp.attrs.items():
                        raw_vec[raw_pos[fname]] += val
                per_baseline.append(raw_vec)
        except (BaselineMismatchError, _NodeFailure, ProtocolError) as e:
            failures[str(eid)] = str(e)
            continue

        phi = np.mean(np.stack(per_baseline), axis=0)
        flags = {"degenerate_divisions": degenerate}
        if keep_score_attrs:
            flags["score_attributions"] = {
                s: float(np.mean(v)) for s, v in sorted(score_psi.items())
            }
        reports.append(
            AttributionReport(
                explicand_id=str(eid),
                phi=phi,
                expected_value=float(np.mean(f_baselines)),
                baseline_set_id=baseline_set_id,
                flags=flags,
                feature_names=list(raw_names),
                f_explicand=float(
                    meta_pipeline.forward(x_e, labels=label)[0, 0]
                ),
            )
        )
    return CoordinationResult(
        reports=reports, raw_feature_names=raw_names, failures=failures
    )


class _NodeFailure(Exception):
    pass


def _check_response(req, resp, node):
    if (
        resp.explicand != req.explicand
        or resp.baseline != req.baseline
        or resp.score != req.score
        or resp.baseline_set != req.baseline_set
    ):
        raise _NodeFailure(f"node {node.node_id} answered a different request")
    unknown = set(resp.attrs) - set(node.features)
    if unknown:
        raise _NodeFailure(
            f"node {node.node_id} attributed to unadvertised features {sorted(unknown)}"
        )
    total = sum(resp.attrs.values())
    err = abs(total - req.value)
    if err > EFFICIENCY_RTOL * max(1.0, abs(req.value)):
        raise _NodeFailure(
            f"node {node.node_id} response violates efficiency "
            f"(sums to {total!r}, expected {req.value!r})"
        )
