import numpy as np
import pytest

from teleportsim import fock as fk


def random_density(rng: np.random.Generator, n_modes: int, cutoff: int,
                   n_kets: int = 6, mixed: bool = True) -> fk.DensityOperator:
    """Random normalized density operator (mixture of two random sparse kets)."""
    modes = [f"m{i}" for i in range(n_modes)]

    def rand_ket():
        kets = {}
        for _ in range(n_kets):
            occ = tuple(int(rng.integers(0, cutoff + 1)) for _ in range(n_modes))
            kets[occ] = complex(rng.normal(), rng.normal())
        return kets

    first = fk.pure_state(modes, cutoff, rand_ket())
    if not mixed:
        return first
    second = fk.pure_state(modes, cutoff, rand_ket())
    w = float(rng.uniform(0.2, 0.8))
    return fk.mix([(w, first), (1.0 - w, second)])


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
