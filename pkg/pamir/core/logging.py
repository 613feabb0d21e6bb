import logging

from rich.console import Console
from rich.logging import RichHandler


def configure_logger(level: str = "INFO") -> None:
    handler = RichHandler(
        console=Console(stderr=True),
        show_time=False,
        show_level=True,
        show_path=False,
        rich_tracebacks=True,
        markup=False,
    )
    fmt = "-->  %(name)s | %(message)s"
    logging.basicConfig(
        level=level.upper(),
        format=fmt,
        handlers=[handler],
        force=True,
    )

    # joblib's worker chatter stays out of run summaries
    logging.getLogger("joblib").setLevel(logging.WARNING)
