from .model import (
    Availability,
    AccessInstruction,
    DataAccessBlock,
    FieldMapping,
    MappingEntry,
    Pagination,
    QueryTemplate,
    TemplateParameter,
    decode_dab,
    phase1_view,
)
from .render import ConcreteRequest, RenderError, render_template
from .validate import ValidationReport, Violation, validate_dab

__all__ = [
    "Availability",
    "AccessInstruction",
    "ConcreteRequest",
    "DataAccessBlock",
    "FieldMapping",
    "MappingEntry",
    "Pagination",
    "QueryTemplate",
    "RenderError",
    "TemplateParameter",
    "ValidationReport",
    "Violation",
    "decode_dab",
    "phase1_view",
    "render_template",
    "validate_dab",
]
