"""Reference generation/captioning service for the simcurate wire protocol."""

from .config import BackendConfig
from .server import make_server, serve

__version__ = "0.1.0"

__all__ = ["BackendConfig", "make_server", "serve"]
