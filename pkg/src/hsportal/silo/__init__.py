from .profiles import PROFILES, SiloProfile, build_dab_doc, build_mapping_doc, build_template_doc, profile
from .seed import RawRow, canonical_value, generate_rows
from .server import SiloServer, build_fleet

__all__ = [
    "PROFILES",
    "RawRow",
    "SiloProfile",
    "SiloServer",
    "build_dab_doc",
    "build_fleet",
    "build_mapping_doc",
    "build_template_doc",
    "canonical_value",
    "generate_rows",
    "profile",
]
