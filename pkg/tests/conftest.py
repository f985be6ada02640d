"""Shared scene builders for the test suite."""

from __future__ import annotations

import numpy as np

from hypercolor import ClueSet, GuideImage, HyperCube, cube_to_clues, make_guide

DEFAULT_WAVELENGTHS = (420.0, 680.0)


def wavelengths_for(bands: int, span=DEFAULT_WAVELENGTHS) -> np.ndarray:
    return np.linspace(span[0], span[1], bands)


def random_cube(height, width, bands, seed=0, rank=None, floor=0.05) -> HyperCube:
    """Random nonnegative cube scaled into [floor-ish, 1].

    With ``rank`` set, pixels are mixtures of that many random spectral
    components, so the cube's pixel matrix has exactly that rank.
    """
    rng = np.random.default_rng(seed)
    if rank is None:
        data = rng.random((height, width, bands)) + floor
    else:
        weights = rng.random((height, width, rank)) + floor
        components = rng.random((rank, bands)) + floor
        data = weights @ components
    return HyperCube(data / data.max(), wavelengths_for(bands))


def rank1_cube(height, width, bands, seed=0) -> HyperCube:
    """Smooth positive scalar field times one fixed positive spectrum."""
    rng = np.random.default_rng(seed)
    rows = np.linspace(0.0, 2.0 * np.pi, height)[:, None]
    cols = np.linspace(0.0, 2.0 * np.pi, width)[None, :]
    field = 1.5 + np.sin(rows + rng.uniform(0, 1)) * np.cos(cols)
    spectrum = rng.random(bands) + 0.2
    data = field[:, :, None] * spectrum[None, None, :]
    return HyperCube(data / data.max(), wavelengths_for(bands))


def constant_cube(height, width, spectrum) -> HyperCube:
    spectrum = np.asarray(spectrum, dtype=np.float64)
    data = np.broadcast_to(spectrum, (height, width, spectrum.size)).copy()
    return HyperCube(data, wavelengths_for(spectrum.size))


def two_region_cube(height, width, bands, seed=0):
    """Left/right halves with distinct fixed spectra; returns the two spectra."""
    rng = np.random.default_rng(seed)
    left = rng.random(bands) * 0.4 + 0.1
    right = rng.random(bands) * 0.4 + 0.5
    data = np.empty((height, width, bands))
    split = width // 2
    data[:, :split] = left
    data[:, split:] = right
    peak = data.max()
    return HyperCube(data / peak, wavelengths_for(bands)), left / peak, right / peak


def guide_of(cube: HyperCube) -> GuideImage:
    return make_guide(cube)


def clues_at(cube: HyperCube, mask) -> ClueSet:
    return cube_to_clues(cube, np.asarray(mask, dtype=bool))


def full_clues(cube: HyperCube) -> ClueSet:
    return clues_at(cube, np.ones((cube.height, cube.width), dtype=bool))


def scatter_mask(height, width, rate, seed=0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    count = max(1, int(rate * height * width))
    flat = rng.choice(height * width, size=count, replace=False)
    mask = np.zeros(height * width, dtype=bool)
    mask[flat] = True
    return mask.reshape(height, width)


def relative_error(actual, expected) -> float:
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    return float(
        np.linalg.norm((actual - expected).ravel())
        / max(np.linalg.norm(expected.ravel()), 1e-300)
    )
