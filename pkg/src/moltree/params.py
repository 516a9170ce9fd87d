"""Model parameter construction.

One entry per named weight family used by the graph encoder, the tree GRU
(shared between tree encoding and tree decoding), the topological and label
heads, the assembly scorer, the variational heads, and optionally the
property head.
"""

from __future__ import annotations

import numpy as np

from .tensorcore import ParamStore

__all__ = ["ATOM_FDIM", "BOND_FDIM", "build_params"]

# element one-hot (9) + degree one-hot (0..4) + charge one-hot (-2..+2) + aromatic bit
ATOM_FDIM = 9 + 5 + 5 + 1
# bond order one-hot (single, double, triple, aromatic) + in-ring bit
BOND_FDIM = 4 + 1


def build_params(
    hidden: int,
    latent: int,
    vocab_size: int,
    rng: np.random.Generator,
    *,
    with_property: bool = False,
) -> ParamStore:
    """Initialize every parameter tensor; latent is split evenly in two."""
    if latent % 2 != 0:
        raise ValueError("latent dimension must be even")
    half = latent // 2
    store = ParamStore()
    add = store.add

    # graph encoder
    add("W1g", (ATOM_FDIM, hidden), rng)
    add("W2g", (BOND_FDIM, hidden), rng)
    add("W3g", (hidden, hidden), rng)
    add("U1g", (ATOM_FDIM, hidden), rng)
    add("U2g", (hidden, hidden), rng)

    # tree GRU (used by both the tree encoder and the tree decoder)
    add("Wz", (vocab_size, hidden), rng)
    add("Uz", (hidden, hidden), rng)
    add("bz", (hidden,), rng, init="zeros")
    add("Wr", (vocab_size, hidden), rng)
    add("Ur", (hidden, hidden), rng)
    add("br", (hidden,), rng, init="zeros")
    add("W", (vocab_size, hidden), rng)
    add("U", (hidden, hidden), rng)
    add("Wo", (vocab_size, hidden), rng)
    add("Uo", (hidden, hidden), rng)

    # topological head
    add("Wd1", (vocab_size, hidden), rng)
    add("Wd2", (half, hidden), rng)
    add("Wd3", (hidden, hidden), rng)
    add("ud", (1, hidden), rng)

    # label head
    add("Wl1", (half, hidden), rng)
    add("Wl2", (hidden, hidden), rng)
    add("Ul", (hidden, vocab_size), rng)

    # assembly scorer
    add("Wa1", (ATOM_FDIM, hidden), rng)
    add("Wa2", (BOND_FDIM, hidden), rng)
    add("Wa3", (hidden, hidden), rng)
    add("Ua1", (ATOM_FDIM, half), rng)
    add("Ua2", (hidden, half), rng)

    # variational heads
    add("Wmu_t", (hidden, half), rng)
    add("bmu_t", (half,), rng, init="zeros")
    add("Wlv_t", (hidden, half), rng)
    add("blv_t", (half,), rng, init="zeros")
    add("Wmu_g", (hidden, half), rng)
    add("bmu_g", (half,), rng, init="zeros")
    add("Wlv_g", (hidden, half), rng)
    add("blv_g", (half,), rng, init="zeros")

    if with_property:
        add("Wp1", (latent, hidden), rng)
        add("bp1", (hidden,), rng, init="zeros")
        add("Wp2", (hidden, 1), rng)
        add("bp2", (1,), rng, init="zeros")

    return store
