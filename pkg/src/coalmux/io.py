"""Reading and writing networks, partitions and tabular outputs."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .network import (
    Layer,
    ModelParams,
    MultilayerNetwork,
    MultilayerPartition,
    NetworkError,
    Vertex,
    VertexRegistry,
    pair_key,
    parse_pair_key,
)
from .quality import ScoreBreakdown

PARTITION_VERSION = 1

VERTEX_HEADER = ["id", "name", "actor_type", "power"]
LAYER_HEADER = ["layer_id", "mode", "time"]
EDGE_HEADER = ["layer_id", "source", "target", "weight"]
PARTICIPATION_HEADER = ["layer_id", "vertex_id"]
COUPLING_HEADER = ["layer_a", "layer_b"]


class DataFileError(NetworkError):
    """Malformed input file; carries the file name and 1-based line number."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line else self.path
        super().__init__(f"{where}: {message}")


# -- low level ---------------------------------------------------------------


def atomic_write(path: str | os.PathLike, data: str) -> None:
    """Write text via a temporary file and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def metadata_block(config: dict | None = None, **extra) -> dict:
    meta = {"tool": "coalmux", "version": __version__}
    if config is not None:
        meta["config"] = config
    meta.update(extra)
    return meta


def format_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return ""
        return repr(x)
    return str(x)


def write_csv(
    path: str | os.PathLike,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    metadata: dict | None = None,
) -> None:
    """Write a CSV file, optionally preceded by one ``# {json}`` metadata line."""
    buf = io.StringIO()
    if metadata is not None:
        buf.write("# " + json.dumps(metadata, sort_keys=True, separators=(",", ":")) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(x) for x in row])
    atomic_write(path, buf.getvalue())


def read_csv(path: str | os.PathLike, header: Sequence[str]) -> list[tuple[int, dict]]:
    """Rows as ``(line number, record)``; leading ``#`` lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise DataFileError(path, 0, "file not found")
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        start += 1
    reader = csv.reader(lines[start:])
    try:
        found = next(reader)
    except StopIteration:
        raise DataFileError(path, start + 1, "missing header") from None
    found = [h.strip() for h in found]
    missing = [h for h in header if h not in found]
    if missing:
        raise DataFileError(path, start + 1, f"header lacks column(s) {missing}")
    out = []
    for offset, row in enumerate(reader):
        lineno = start + 2 + offset
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(found):
            raise DataFileError(path, lineno, f"expected {len(found)} fields, got {len(row)}")
        out.append((lineno, dict(zip(found, (c.strip() for c in row)))))
    return out


# -- networks ----------------------------------------------------------------


def load_network(
    vertices_file,
    layers_file,
    edges_file,
    participation_file=None,
    couplings_file=None,
) -> MultilayerNetwork:
    """Read a network from the CSV file set.

    Without a participation file a vertex participates in a layer iff it has
    an edge there; the file can add isolates.  Couplings default to all
    layer pairs.
    """
    vertices = []
    for lineno, rec in read_csv(vertices_file, VERTEX_HEADER):
        try:
            power = float(rec["power"]) if rec["power"] else 0.0
        except ValueError:
            raise DataFileError(vertices_file, lineno, f"bad power {rec['power']!r}") from None
        try:
            vertices.append(Vertex(rec["id"], rec["name"], rec["actor_type"], power))
        except NetworkError as exc:
            raise DataFileError(vertices_file, lineno, str(exc)) from None
    try:
        registry = VertexRegistry(vertices)
    except NetworkError as exc:
        raise DataFileError(vertices_file, 0, str(exc)) from None

    layer_rows = []
    seen_layers = set()
    for lineno, rec in read_csv(layers_file, LAYER_HEADER):
        key = rec["layer_id"]
        if not key or "|" in key:
            raise DataFileError(layers_file, lineno, f"bad layer id {key!r}")
        if key in seen_layers:
            raise DataFileError(layers_file, lineno, f"duplicate layer id {key!r}")
        try:
            t = int(rec["time"])
        except ValueError:
            raise DataFileError(layers_file, lineno, f"bad time {rec['time']!r}") from None
        seen_layers.add(key)
        layer_rows.append((key, rec["mode"], t))

    edges = {key: {} for key, _, _ in layer_rows}
    for lineno, rec in read_csv(edges_file, EDGE_HEADER):
        key = rec["layer_id"]
        if key not in edges:
            raise DataFileError(edges_file, lineno, f"unknown layer {key!r}")
        try:
            u = registry.index(rec["source"])
            v = registry.index(rec["target"])
        except NetworkError as exc:
            raise DataFileError(edges_file, lineno, str(exc)) from None
        if u == v:
            raise DataFileError(edges_file, lineno, f"self-loop on {rec['source']!r}")
        try:
            w = float(rec["weight"])
        except ValueError:
            raise DataFileError(edges_file, lineno, f"bad weight {rec['weight']!r}") from None
        if not (w > 0) or math.isinf(w):
            raise DataFileError(edges_file, lineno, f"weight must be positive, got {w}")
        e = (min(u, v), max(u, v))
        if e in edges[key]:
            raise DataFileError(edges_file, lineno, "duplicate edge")
        edges[key][e] = w

    extra = {key: set() for key, _, _ in layer_rows}
    if participation_file is not None:
        for lineno, rec in read_csv(participation_file, PARTICIPATION_HEADER):
            key = rec["layer_id"]
            if key not in extra:
                raise DataFileError(participation_file, lineno, f"unknown layer {key!r}")
            try:
                extra[key].add(registry.index(rec["vertex_id"]))
            except NetworkError as exc:
                raise DataFileError(participation_file, lineno, str(exc)) from None

    layers = []
    for key, mode, t in layer_rows:
        pairs = sorted(edges[key])
        src = np.array([p[0] for p in pairs], dtype=np.int64)
        dst = np.array([p[1] for p in pairs], dtype=np.int64)
        w = np.array([edges[key][p] for p in pairs], dtype=float)
        part = set(src.tolist()) | set(dst.tolist()) | extra[key]
        layers.append(Layer(key, mode, t, np.array(sorted(part), dtype=np.int64), src, dst, w))

    couplings = None
    if couplings_file is not None:
        couplings = []
        for lineno, rec in read_csv(couplings_file, COUPLING_HEADER):
            if rec["layer_a"] not in seen_layers or rec["layer_b"] not in seen_layers:
                raise DataFileError(couplings_file, lineno, "unknown layer in coupling")
            if rec["layer_a"] == rec["layer_b"]:
                raise DataFileError(couplings_file, lineno, "self-coupling")
            couplings.append((rec["layer_a"], rec["layer_b"]))
    try:
        return MultilayerNetwork(registry, layers, couplings)
    except NetworkError as exc:
        raise DataFileError(layers_file, 0, str(exc)) from None


def load_network_dir(path, couplings_file=None) -> MultilayerNetwork:
    path = Path(path)
    part = path / "participation.csv"
    return load_network(
        path / "vertices.csv",
        path / "layers.csv",
        path / "edges.csv",
        part if part.exists() else None,
        couplings_file,
    )


def edge_rows(net: MultilayerNetwork):
    ids = net.registry.ids
    for layer in net.layers:
        for u, v, w in zip(layer.src, layer.dst, layer.weight):
            yield layer.key, ids[u], ids[v], float(w)


def save_network(net: MultilayerNetwork, path, metadata: dict | None = None) -> None:
    """Write the CSV file set (participation always included) to directory ``path``."""
    path = Path(path)
    ids = net.registry.ids
    write_csv(
        path / "vertices.csv",
        VERTEX_HEADER,
        ((v.id, v.name, v.actor_type, float(v.power)) for v in net.registry),
        metadata,
    )
    write_csv(path / "layers.csv", LAYER_HEADER, ((l.key, l.mode, l.time) for l in net.layers), metadata)
    write_csv(path / "edges.csv", EDGE_HEADER, edge_rows(net), metadata)
    write_csv(
        path / "participation.csv",
        PARTICIPATION_HEADER,
        ((l.key, ids[v]) for l in net.layers for v in l.participants),
        metadata,
    )


def save_couplings(net: MultilayerNetwork, path, metadata: dict | None = None) -> None:
    write_csv(path, COUPLING_HEADER, net.couplings, metadata)


# -- partitions ----------------------------------------------------------------


def params_to_json(params: ModelParams) -> dict:
    return {
        "gamma": {k: float(v) for k, v in params.gamma.items()},
        "omega": {pair_key(p): float(v) for p, v in params.omega.items()},
        "beta": {k: float(v) for k, v in params.beta.items()},
        "k_max": {k: (None if v is None else int(v)) for k, v in params.k_max.items()},
    }


def params_from_json(doc: dict) -> ModelParams:
    return ModelParams(
        gamma={k: float(v) for k, v in doc["gamma"].items()},
        omega={parse_pair_key(k): float(v) for k, v in doc["omega"].items()},
        beta={k: float(v) for k, v in doc["beta"].items()},
        k_max={k: (None if v is None else int(v)) for k, v in doc["k_max"].items()},
    )


def scores_to_json(scores: ScoreBreakdown) -> dict:
    return {
        "intra": {k: float(v) for k, v in scores.intra.items()},
        "inter": {pair_key(p): float(v) for p, v in scores.inter.items()},
        "total": float(scores.total),
    }


def scores_from_json(doc: dict) -> ScoreBreakdown:
    return ScoreBreakdown(
        intra={k: float(v) for k, v in doc["intra"].items()},
        inter={parse_pair_key(k): float(v) for k, v in doc["inter"].items()},
        total=float(doc["total"]),
    )


def partition_document(
    partition: MultilayerPartition,
    params: ModelParams,
    scores: ScoreBreakdown,
    metadata: dict | None = None,
) -> dict:
    doc = {
        "version": PARTITION_VERSION,
        "assignments": {k: dict(v) for k, v in partition.assignments.items()},
        "params": params_to_json(params),
        "scores": scores_to_json(scores),
    }
    if metadata is not None:
        doc["metadata"] = metadata
    return doc


def save_partition(partition, params, scores, path, metadata: dict | None = None) -> None:
    doc = partition_document(partition, params, scores, metadata)
    atomic_write(path, json.dumps(doc, indent=2) + "\n")


def _schema_error(path, msg):
    return DataFileError(path, 0, f"schema violation: {msg}")


def load_partition(path) -> tuple[MultilayerPartition, ModelParams, ScoreBreakdown]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataFileError(path, 0, "file not found") from None
    except json.JSONDecodeError as exc:
        raise DataFileError(path, exc.lineno, f"invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise _schema_error(path, "top level must be an object")
    if doc.get("version") != PARTITION_VERSION:
        raise DataFileError(
            path, 0, f"unsupported partition version {doc.get('version')!r} "
            f"(expected {PARTITION_VERSION})"
        )
    for key in ("assignments", "params", "scores"):
        if not isinstance(doc.get(key), dict):
            raise _schema_error(path, f"missing object {key!r}")
    assignments = doc["assignments"]
    for layer, labels in assignments.items():
        if not isinstance(labels, dict) or not all(
            isinstance(c, int) and not isinstance(c, bool) and c >= 0 for c in labels.values()
        ):
            raise _schema_error(path, f"layer {layer!r} labels must be non-negative integers")
    try:
        params = params_from_json(doc["params"])
        scores = scores_from_json(doc["scores"])
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise _schema_error(path, str(exc)) from None
    return MultilayerPartition(assignments), params, scores


def load_partition_metadata(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8")).get("metadata", {})
