import numpy as np

SEED_MASK = 2**63 - 1


def derive_seed_sequence(master_seed: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))


def derive_seed(master_seed: int, *keys: int) -> int:
    state = derive_seed_sequence(master_seed, *keys).generate_state(1, dtype=np.uint64)
    return int(state[0]) & SEED_MASK


def draw_entropy_seed() -> int:
    return int(np.random.SeedSequence().entropy) & SEED_MASK
