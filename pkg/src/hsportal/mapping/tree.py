"""Parse silo payloads into one uniform tree shape.

Every supported wire format (csv, json, xml, txt) becomes nested dicts,
lists, and scalars, addressed by pointer paths. That single shape is what
makes field mappings format-agnostic.
"""

from __future__ import annotations

import csv
import io
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Any, Iterator

from ..dab.model import RESPONSE_FORMATS


class PayloadSyntaxError(ValueError):
    """The payload does not parse under its declared format."""

    def __init__(self, message: str, *, line: int | None = None):
        suffix = f" (line {line})" if line is not None else ""
        super().__init__(message + suffix)
        self.line = line


class PathError(LookupError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"path {path!r}: {reason}")
        self.path = path


@dataclass(frozen=True)
class ParsedTree:
    format: str
    root: Any


def _parse_csv(text: str) -> list[dict[str, str]]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        return []
    except csv.Error as exc:
        raise PayloadSyntaxError(f"bad csv: {exc}", line=1) from None
    rows: list[dict[str, str]] = []
    try:
        for row in reader:
            if not row:
                continue  # blank trailing line
            if len(row) != len(header):
                raise PayloadSyntaxError(
                    f"row has {len(row)} cells, header has {len(header)}",
                    line=reader.line_num,
                )
            rows.append(dict(zip(header, row)))
    except csv.Error as exc:
        raise PayloadSyntaxError(f"bad csv: {exc}", line=reader.line_num) from None
    return rows


def _element_to_node(elem: ET.Element) -> dict[str, Any]:
    node: dict[str, Any] = {}
    for name, value in elem.attrib.items():
        node["@" + name] = value
    text = (elem.text or "").strip()
    if text:
        node["#text"] = text
    for child in elem:
        node.setdefault(child.tag, []).append(_element_to_node(child))
    return node


def _parse_xml(text: str) -> dict[str, Any]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line = exc.position[0] if exc.position else None
        raise PayloadSyntaxError(f"bad xml: {exc}", line=line) from None
    return {root.tag: [_element_to_node(root)]}


def parse_payload(payload: bytes, response_format: str) -> ParsedTree:
    """Decode and parse a raw payload under the declared format."""
    if response_format not in RESPONSE_FORMATS:
        raise ValueError(f"unknown response format {response_format!r}")
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise PayloadSyntaxError(f"payload is not utf-8: {exc}") from None

    if response_format == "csv":
        return ParsedTree("csv", _parse_csv(text))
    if response_format == "json":
        try:
            return ParsedTree("json", json.loads(text))
        except json.JSONDecodeError as exc:
            raise PayloadSyntaxError(f"bad json: {exc.msg}", line=exc.lineno) from None
    if response_format == "xml":
        return ParsedTree("xml", _parse_xml(text))
    return ParsedTree("txt", text.splitlines())


def _unescape(segment: str) -> str:
    return segment.replace("~1", "/").replace("~0", "~")


def _escape(segment: str) -> str:
    return segment.replace("~", "~0").replace("/", "~1")


def resolve_path(root: Any, path: str) -> Any:
    """Walk a pointer path: ``""`` is the root, segments are ``/``-joined.

    Dict segments are key lookups, list segments are numeric indices.
    As a convenience for formats that wrap children in lists (xml), a
    non-numeric segment applied to a single-element list descends into
    that element first; on longer lists it is ambiguous and fails.
    """
    if path == "":
        return root
    if not path.startswith("/"):
        raise PathError(path, "must be empty or start with '/'")
    node = root
    for raw_segment in path[1:].split("/"):
        segment = _unescape(raw_segment)
        while True:
            if isinstance(node, dict):
                if segment not in node:
                    raise PathError(path, f"no key {segment!r}")
                node = node[segment]
                break
            if isinstance(node, list):
                if segment.lstrip("-").isdigit():
                    index = int(segment)
                    if not -len(node) <= index < len(node):
                        raise PathError(path, f"index {index} out of range")
                    node = node[index]
                    break
                if len(node) == 1:
                    node = node[0]
                    continue  # retry the same segment one level down
                raise PathError(
                    path, f"segment {segment!r} is ambiguous over {len(node)} elements"
                )
            raise PathError(path, f"segment {segment!r} hit a leaf")
    return node


def canonical_paths(node: Any, prefix: str = "") -> Iterator[tuple[str, Any]]:
    """Enumerate every leaf with the canonical pointer that reaches it."""
    if isinstance(node, dict):
        for key, child in node.items():
            yield from canonical_paths(child, f"{prefix}/{_escape(key)}")
    elif isinstance(node, list):
        for index, child in enumerate(node):
            yield from canonical_paths(child, f"{prefix}/{index}")
    else:
        yield prefix, node
