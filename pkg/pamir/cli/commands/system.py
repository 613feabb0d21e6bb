import orjson
import typer

from pamir.core.deps import console, get_state

router = typer.Typer()


def config_json(ctx: typer.Context) -> str:
    config = get_state(ctx).config
    return orjson.dumps(config.model_dump(mode="json"), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS).decode()


@router.command("show-config")
def show_config_command(ctx: typer.Context):
    """Print the resolved configuration (defaults, environment, --config file) as JSON."""
    console.print_json(config_json(ctx))


@router.command("version")
def version_command(ctx: typer.Context):
    config = get_state(ctx).config
    console.print(f"{config.APP_NAME} {config.APP_VERSION}")
