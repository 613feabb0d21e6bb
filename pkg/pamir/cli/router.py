from pathlib import Path
from typing import Optional

import typer

from pamir.cli.commands import bench, fit, predict, simulate, system
from pamir.core.config import load_config
from pamir.core.deps import AppState, console
from pamir.core.errors import cli_errors
from pamir.core.logging import configure_logger

cli_router = typer.Typer(
    name="pamir",
    help="Inverse regression for compositional count data.",
    no_args_is_help=True,
    add_completion=False,
)


@cli_router.callback(invoke_without_command=True)
@cli_errors
def main_callback(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", help="JSON file overriding defaults and environment."),
    threads: Optional[int] = typer.Option(None, "--threads", help="Cap on parallel workers; results do not depend on it."),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
    show_config: bool = typer.Option(False, "--show-config", help="Print the resolved configuration and exit."),
):
    resolved = load_config(config).with_overrides(THREADS=threads, LOG_LEVEL=log_level)
    configure_logger(resolved.LOG_LEVEL)
    ctx.obj = AppState(config=resolved)
    if show_config:
        system.show_config_command(ctx)
        raise typer.Exit()
    if ctx.invoked_subcommand is None:
        console.print(ctx.get_help())


cli_router.registered_commands += fit.router.registered_commands
cli_router.registered_commands += predict.router.registered_commands
cli_router.registered_commands += simulate.router.registered_commands
cli_router.registered_commands += system.router.registered_commands
cli_router.add_typer(bench.router, name="bench")
