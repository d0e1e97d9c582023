"""Discrete observations of the jump-diffusion log-price over a sampling scheme.

Random streams are keyed by ``(seed, block, component)``: Brownian and jump
draws never share a stream, so switching the jump component on or off leaves
the continuous part bit-for-bit unchanged. Paths are generated in blocks of
:func:`block_size` rows; block ``b`` always holds path indices
``b * block_size .. (b + 1) * block_size - 1`` whatever the worker count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .market_model import (DriftSpec, JumpSpec, ModelError, SamplingScheme,
                           VolatilityModel, eval_sigma)

BROWNIAN, JUMPS = 0, 1
MAX_BLOCK_VALUES = 2**22


class SimulationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PathIncrements:
    scheme: SamplingScheme
    dx: np.ndarray = field(repr=False)
    seed: int
    sigma_seed: int | None = None
    path_index: int = 0

    def __post_init__(self):
        if len(self.dx) != self.scheme.N:
            raise SimulationError("increment count does not match the scheme")

    def to_csv(self, path) -> None:
        """Write ``i,t_start,t_end,dx`` rows."""
        t = self.scheme.times
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "t_start", "t_end", "dx"])
            for i, d in enumerate(self.dx, start=1):
                w.writerow([i, repr(float(t[i - 1])), repr(float(t[i])), repr(float(d))])


def exact_gaussian(vol: VolatilityModel, drift: DriftSpec) -> bool:
    return vol.is_constant and drift.kind in ("zero", "constant")


def block_size(vol: VolatilityModel, drift: DriftSpec, scheme: SamplingScheme,
               substeps: int = 16) -> int:
    """Paths per block; bounded so one block holds about 2**22 normal draws."""
    per_path = scheme.N * (1 if exact_gaussian(vol, drift) else substeps)
    return max(1, min(65536, MAX_BLOCK_VALUES // max(per_path, 1)))


def stream(seed: int, block: int, component: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(int(seed), spawn_key=(int(block), int(component)))))


def _check(jumps: JumpSpec, substeps: int) -> None:
    if substeps < 1:
        raise SimulationError("substeps must be >= 1")
    if jumps.kind == "truncated-stable" and jumps.beta >= 1.0:
        raise ModelError("Blumenthal-Getoor index must be < 1 for finite-variation jumps")


def continuous_block(vol: VolatilityModel, drift: DriftSpec, scheme: SamplingScheme,
                     rng: np.random.Generator, rows: int, sigma_seed: int | None,
                     substeps: int) -> np.ndarray:
    """Continuous part of the increments for ``rows`` paths, shape (rows, N)."""
    gaps = scheme.gaps
    N = scheme.N
    if exact_gaussian(vol, drift):
        # exact: the increment over a gap is N(a * gap, sigma^2 * gap)
        sd = vol.params[0] * np.sqrt(gaps)
        out = rng.standard_normal((rows, N))
        out *= sd
        if drift.kind == "constant":
            out += drift.values[0] * gaps
        return out
    # Euler with left-point sigma and drift on each sub-interval
    frac = np.arange(substeps) / substeps
    starts = scheme.times[:-1, None] + gaps[:, None] * frac[None, :]
    sig = eval_sigma(vol, np.clip(starts, 0.0, 1.0), sigma_seed)
    a = drift(np.clip(starts, 0.0, 1.0))
    dt = (gaps / substeps)[:, None]
    z = rng.standard_normal((rows, N, substeps))
    out = np.einsum("rnk,nk->rn", z, sig * np.sqrt(dt))
    out += (a * dt).sum(axis=1)
    return out


def jump_block(jumps: JumpSpec, scheme: SamplingScheme, rng: np.random.Generator,
               rows: int) -> np.ndarray:
    """Sum of jumps falling in each gap, shape (rows, N).

    Jump counts are drawn per path over [0, t_N] and jump times placed
    uniformly, which is the same law as independent Poisson counts per gap.
    """
    out = np.zeros((rows, scheme.N))
    rate = jumps.rate
    if jumps.kind == "none" or rate == 0.0:
        return out
    end = float(scheme.times[-1])
    counts = rng.poisson(rate * end, size=rows)
    total = int(counts.sum())
    if total:
        when = rng.random(total) * end
        sizes = jumps.sample_sizes(rng, total)
        gap = np.clip(np.searchsorted(scheme.times, when, side="right") - 1, 0, scheme.N - 1)
        cell = np.repeat(np.arange(rows), counts) * scheme.N + gap
        out.ravel()[:] = np.bincount(cell, weights=sizes, minlength=rows * scheme.N)
    return out


def simulate_block(vol: VolatilityModel, drift: DriftSpec, jumps: JumpSpec,
                   scheme: SamplingScheme, seed: int, block: int, rows: int | None = None,
                   sigma_seed: int | None = None, substeps: int = 16) -> np.ndarray:
    """Increments for block ``block``; ``rows`` defaults to the full block size."""
    _check(jumps, substeps)
    if rows is None:
        rows = block_size(vol, drift, scheme, substeps)
    dx = continuous_block(vol, drift, scheme, stream(seed, block, BROWNIAN), rows,
                          sigma_seed, substeps)
    if jumps.kind != "none" and jumps.rate > 0.0:
        dx += jump_block(jumps, scheme, stream(seed, block, JUMPS), rows)
    return dx


def simulate_increments(vol: VolatilityModel, drift: DriftSpec, jumps: JumpSpec,
                        scheme: SamplingScheme, seed: int, sigma_seed: int | None = None,
                        substeps: int = 16, path_index: int = 0) -> PathIncrements:
    """One observed path. Equal arguments give identical increments."""
    block, row = divmod(path_index, block_size(vol, drift, scheme, substeps))
    # the whole block is drawn so a path is the same whether simulated alone or in bulk
    dx = simulate_block(vol, drift, jumps, scheme, seed, block, None, sigma_seed, substeps)[row]
    dx = dx.copy()
    dx.setflags(write=False)
    return PathIncrements(scheme, dx, int(seed), sigma_seed, path_index)


def block_ranges(num_paths: int, paths_per_block: int):
    """Yield ``(block, rows)`` covering path indices 0..num_paths-1.

    A short final block is still simulated in full and truncated to ``rows``.
    """
    for b in range(math.ceil(num_paths / paths_per_block)):
        yield b, min(paths_per_block, num_paths - b * paths_per_block)
