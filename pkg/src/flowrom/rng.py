"""Seeded random number generation.

All randomness in the package flows through `make_rng`. The generator is
numpy's Philox, a 64-bit counter-based algorithm: identical seeds give
identical streams on one platform/numpy build, which is the reproducibility
contract everything downstream (data generation, init, noise) relies on.
Gaussian draws use numpy's ziggurat sampler.
"""

import numpy as np

from .errors import ConfigError


def make_rng(seed):
    """Return a Generator with a fully determined state for `seed`."""
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def gaussian(rng, n, sigma):
    """n i.i.d. draws from N(0, sigma^2); sigma=0 is exactly zeros."""
    if sigma < 0:
        raise ConfigError(f"noise std must be >= 0, got {sigma}")
    if sigma == 0:
        return np.zeros(n)
    return rng.normal(0.0, sigma, n)
