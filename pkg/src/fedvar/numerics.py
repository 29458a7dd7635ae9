"""Shared scalar/vector numerics: stable softmax and Dirichlet sampling."""

from __future__ import annotations

import numpy as np

from .rng import Rng, as_generator


def softmax(z: np.ndarray) -> np.ndarray:
    """Probability vector exp(z_i) / sum_j exp(z_j), computed along the last axis.

    Max-subtraction keeps the exponentials in range, so inputs of any
    finite magnitude are safe.  Shift-invariant: softmax(z + c) == softmax(z).
    """
    z = np.asarray(z, dtype=np.float64)
    if np.isnan(z).any():
        raise ValueError("softmax input contains NaN")
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def dirichlet_sample(
    rng: Rng | np.random.Generator, concentration: float, k: int
) -> np.ndarray:
    """Draw one symmetric Dirichlet(concentration) vector of length k.

    Sampled as k independent Gamma(concentration, 1) variates, normalized.
    Small concentrations produce highly skewed vectors (most mass on one
    entry), which is what drives label shift in the data partitioner.
    All entries are strictly positive: the rare Gamma draw that underflows
    to zero is redrawn.
    """
    if concentration <= 0:
        raise ValueError(f"concentration must be positive, got {concentration}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    gen = as_generator(rng)
    g = gen.standard_gamma(concentration, size=k)
    while (zero := g == 0.0).any():
        g[zero] = gen.standard_gamma(concentration, size=int(zero.sum()))
    return g / g.sum()
