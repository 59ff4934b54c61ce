"""JSON interchange format for tensor networks."""

import base64
import binascii
import json
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ArgumentError, ParseError
from .network import Bond, PhysicalMode, TensorNetwork, natural_key
from .settings import INTERCHANGE_VERSION
from .tensor import DenseTensor

_WIRE_DTYPE = np.dtype("<f8")


class NodeRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    mode_labels: List[str]
    shape: List[int]
    data: Union[str, List[float]]


class BondRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    label: str
    a: str
    b: str
    rank: int = Field(ge=1)


class PhysicalRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    label: str
    dim: int = Field(ge=1)


class NetworkDocument(BaseModel):
    """Top-level interchange document. Node data is row-major, either base64 little-endian float64 or a number list."""

    model_config = ConfigDict(extra="forbid")

    version: int
    nodes: List[NodeRecord]
    bonds: List[BondRecord]
    physical: Dict[str, Union[PhysicalRecord, List[PhysicalRecord]]]


def _location(loc) -> str:
    path = "$"
    for part in loc:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def _encode(data: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(data, dtype=_WIRE_DTYPE).tobytes()).decode("ascii")


def serialize(net: TensorNetwork) -> bytes:
    """Encode a network as UTF-8 JSON. Output depends only on the network contents."""
    document = {
        "version": INTERCHANGE_VERSION,
        "nodes": [
            {
                "id": node,
                "mode_labels": list(net.nodes[node].labels),
                "shape": list(net.nodes[node].shape),
                "data": _encode(net.nodes[node].data),
            }
            for node in net.node_ids
        ],
        "bonds": [{"label": bond.label, "a": bond.a, "b": bond.b, "rank": bond.rank} for bond in net.bond_list],
        "physical": {
            node: (
                {"label": modes[0].label, "dim": modes[0].dim}
                if len(modes) == 1
                else [{"label": mode.label, "dim": mode.dim} for mode in modes]
            )
            for node, modes in sorted(net.physical.items(), key=lambda item: natural_key(item[0]))
        },
    }
    return json.dumps(document, separators=(",", ":")).encode("utf-8")


def _decode_data(record: NodeRecord, where: str) -> np.ndarray:
    expected = int(np.prod(record.shape, dtype=np.int64))
    if isinstance(record.data, str):
        try:
            raw = base64.b64decode(record.data.encode("ascii"), validate=True)
        except (binascii.Error, UnicodeEncodeError):
            raise ParseError("Node data is not valid base64", f"{where}.data") from None
        if len(raw) != expected * _WIRE_DTYPE.itemsize:
            size = expected * _WIRE_DTYPE.itemsize
            raise ParseError(f"Node data holds {len(raw)} bytes, expected {size}", f"{where}.data")
        values = np.frombuffer(raw, dtype=_WIRE_DTYPE)
    else:
        if len(record.data) != expected:
            raise ParseError(f"Node data holds {len(record.data)} numbers, expected {expected}", f"{where}.data")
        values = np.asarray(record.data, dtype=np.float64)
    return values.astype(np.float64).reshape(record.shape)


def deserialize(payload: Union[bytes, str]) -> TensorNetwork:
    """
    Decode a network document.

    Raises:
        ParseError: with the JSON path of the offending entry.
    """
    try:
        raw = json.loads(payload)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ParseError(f"Document is not valid JSON: {e}", "$") from None
    try:
        document = NetworkDocument.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        raise ParseError(first["msg"], _location(first["loc"])) from None

    if document.version != INTERCHANGE_VERSION:
        raise ParseError(f"Unsupported document version {document.version}", "$.version")

    net = TensorNetwork()
    for i, record in enumerate(document.bonds):
        if record.label in net.bonds:
            raise ParseError(f"Duplicate bond label {record.label!r}", f"$.bonds[{i}].label")
        net.add_bond(Bond(label=record.label, a=record.a, b=record.b, rank=record.rank))

    for i, record in enumerate(document.nodes):
        where = f"$.nodes[{i}]"
        if record.id in net.nodes:
            raise ParseError(f"Duplicate node id {record.id!r}", f"{where}.id")
        if len(record.mode_labels) != len(record.shape):
            raise ParseError("mode_labels and shape differ in length", f"{where}.mode_labels")
        if record.id not in document.physical:
            raise ParseError(f"Node {record.id!r} has no physical mode", "$.physical")
        try:
            tensor = DenseTensor(_decode_data(record, where), record.mode_labels)
        except ArgumentError as e:
            raise ParseError(str(e), where) from None
        modes = document.physical[record.id]
        modes = modes if isinstance(modes, list) else [modes]
        net.add_node(record.id, tensor, [PhysicalMode(label=mode.label, dim=mode.dim) for mode in modes])

    for node in document.physical:
        if node not in net.nodes:
            raise ParseError(f"Physical mode given for unknown node {node!r}", f"$.physical.{node}")
    return net


def save(net: TensorNetwork, path: Union[str, Path]):
    Path(path).write_bytes(serialize(net))


def load(path: Union[str, Path]) -> TensorNetwork:
    return deserialize(Path(path).read_bytes())
