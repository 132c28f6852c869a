"""Seeded synthetic sparse-recovery data.

Randomness contract: 64-bit sub-seeds are derived from a master seed with
SplitMix64 (one mixing round per index), and every stream is drawn from
numpy's Philox counter-based bit generator keyed by such a seed.  Both
algorithms are published and stable, so a (seed, config) pair pins the
generated bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Dataset", "derive_seed", "gen_cs_dataset", "make_rng", "splitmix64"]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(z: int) -> int:
    """One SplitMix64 output step (Steele/Lea/Flood mixing constants)."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(master: int, *indices: int) -> int:
    """Stable 64-bit sub-seed for (master, index path).

    Each index folds into the state via golden-ratio weighting followed by
    a SplitMix64 round, so nearby trial/epsilon indices land on unrelated
    streams.
    """
    state = splitmix64(master & _MASK64)
    for ix in indices:
        state = splitmix64((state ^ (((ix + 1) * _GOLDEN) & _MASK64)) & _MASK64)
    return state


def make_rng(seed: int) -> np.random.Generator:
    """Philox generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


@dataclass
class Dataset:
    """Sensing matrix plus (x, s) pairs with x = A s + w.

    ``xs`` is (count, n) and ``ss`` is (count, m); every s has exactly
    ``k`` non-zeros.
    """

    a: np.ndarray
    xs: np.ndarray
    ss: np.ndarray
    seed: int
    k: int
    noise_std: float
    signal_std: float

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.a.shape[1]

    @property
    def count(self) -> int:
        return self.xs.shape[0]

    def pair(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.xs[i], self.ss[i]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            a=self.a,
            xs=self.xs[indices],
            ss=self.ss[indices],
            seed=self.seed,
            k=self.k,
            noise_std=self.noise_std,
            signal_std=self.signal_std,
        )


def gen_cs_dataset(
    n: int,
    m: int,
    k: int,
    count: int,
    seed: int,
    noise_std: float = 0.01,
    signal_std: float = 0.5,
    a: np.ndarray | None = None,
) -> Dataset:
    """Draw a sensing matrix and ``count`` sparse pairs.

    A has i.i.d. standard normal entries (unless one is supplied), each
    support is uniform without replacement, non-zero values are
    N(0, signal_std^2), and x = A s + w with w ~ N(0, noise_std^2).
    Deterministic given the seed.
    """
    if n < 1 or m < 1:
        raise ValueError("dimensions must be positive")
    if count < 1:
        raise ValueError("count must be positive")
    if k < 0 or k > m:
        raise ValueError(f"sparsity k={k} must satisfy 0 <= k <= m={m}")
    if noise_std < 0 or signal_std < 0:
        raise ValueError("standard deviations must be non-negative")
    rng = make_rng(derive_seed(seed, 0x0A))
    if a is None:
        a = rng.standard_normal((n, m))
    else:
        a = np.asarray(a, dtype=np.float64)
        if a.shape != (n, m):
            raise ValueError(f"supplied A has shape {a.shape}, expected {(n, m)}")
    pair_rng = make_rng(derive_seed(seed, 0x0B))
    ss = np.zeros((count, m))
    xs = np.empty((count, n))
    for i in range(count):
        support = pair_rng.choice(m, size=k, replace=False)
        values = pair_rng.normal(0.0, signal_std, size=k)
        ss[i, support] = values
        noise = pair_rng.normal(0.0, noise_std, size=n)
        xs[i] = a @ ss[i] + noise
    return Dataset(a=a, xs=xs, ss=ss, seed=seed, k=k, noise_std=noise_std, signal_std=signal_std)
