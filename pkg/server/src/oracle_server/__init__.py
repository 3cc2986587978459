"""Reference implementation of the block-scoring wire protocol."""

from oracle_server.app import create_app

__version__ = "0.1.0"

__all__ = ["create_app", "__version__"]
