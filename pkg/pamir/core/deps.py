from dataclasses import dataclass
from typing import Optional

import typer
from rich.console import Console

from pamir.core.config import Config, get_config
from pamir.utils.seeding import draw_entropy_seed

console = Console()


@dataclass
class AppState:
    config: Config


def get_state(ctx: typer.Context) -> AppState:
    root = ctx.find_root()
    if not isinstance(root.obj, AppState):
        root.obj = AppState(config=get_config())
    return root.obj


def get_config_from(ctx: typer.Context, **overrides) -> Config:
    return get_state(ctx).config.with_overrides(**overrides)


def resolve_seed(seed: Optional[int]) -> int:
    """An omitted seed is drawn from system entropy and printed so the run can be repeated."""
    if seed is not None:
        return seed
    seed = draw_entropy_seed()
    console.print(f"seed: {seed}")
    return seed
