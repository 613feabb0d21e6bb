import typer

from pamir.cli.router import cli_router


def create_app() -> typer.Typer:
    return cli_router


app = create_app()


def main() -> None:
    app()


if __name__ == "__main__":
    main()
