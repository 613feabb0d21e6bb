from .router import cli_router

__all__ = ["cli_router"]
