from .seeding import derive_seed, derive_seed_sequence, draw_entropy_seed
from .validate_and_parse_table import CountTable, validate_and_parse_table, write_count_table

__all__ = [
    "CountTable",
    "validate_and_parse_table",
    "write_count_table",
    "derive_seed",
    "derive_seed_sequence",
    "draw_entropy_seed",
]
