from .tree import (
    ParsedTree,
    PathError,
    PayloadSyntaxError,
    canonical_paths,
    parse_payload,
    resolve_path,
)
from .apply import MappingError, apply_mapping, filter_range, map_payload

__all__ = [
    "MappingError",
    "ParsedTree",
    "PathError",
    "PayloadSyntaxError",
    "apply_mapping",
    "canonical_paths",
    "filter_range",
    "map_payload",
    "parse_payload",
    "resolve_path",
]
