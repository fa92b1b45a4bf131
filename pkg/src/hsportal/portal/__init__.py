from .app import create_app
from .state import ApiPrincipal, PortalState, build_state

__all__ = ["ApiPrincipal", "PortalState", "build_state", "create_app"]
