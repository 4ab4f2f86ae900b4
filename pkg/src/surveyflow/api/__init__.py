"""REST control plane: the HTTP face of the engine and store."""

from .service import ApiToken, GatewayService, Role, TokenSet
from .server import GatewayServer, main, serve

__all__ = ["ApiToken", "GatewayServer", "GatewayService", "Role", "TokenSet", "main", "serve"]
