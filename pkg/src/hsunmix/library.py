"""Synthetic reflectance library used when no measured library is at hand.

Each material is a smooth continuum with a handful of Gaussian absorption
bands, sampled on a 224-band grid from 0.38 to 2.5 um. The bundled
``data/library.csv`` is produced by ``python -m hsunmix.library``.
"""

from __future__ import annotations

import numpy as np

from hsunmix.hyperdata import SpectralLibrary, default_library_path, write_spectral_library

N_BANDS = 224
WL_MIN, WL_MAX = 0.38, 2.5
LIBRARY_SEED = 20170610


def wavelength_grid(n_bands: int = N_BANDS) -> np.ndarray:
    return np.linspace(WL_MIN, WL_MAX, n_bands)


def _material(wl: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    x = (wl - WL_MIN) / (WL_MAX - WL_MIN)
    # brightness + slope + curvature of the continuum
    level = rng.uniform(0.15, 0.6)
    slope = rng.uniform(-0.3, 0.4)
    bend = rng.uniform(-0.3, 0.3)
    edge = rng.uniform(0.0, 0.35) / (1.0 + np.exp(-(wl - rng.uniform(0.45, 0.8)) / 0.04))
    refl = level + slope * x + bend * x * (1 - x) + edge
    for _ in range(rng.integers(2, 6)):
        centre = rng.uniform(0.45, 2.45)
        width = rng.uniform(0.02, 0.15)
        depth = rng.uniform(0.05, 0.45)
        refl = refl * (1 - depth * np.exp(-0.5 * ((wl - centre) / width) ** 2))
    return np.clip(refl, 0.02, 0.95)


def _angle(a, b):
    c = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    return np.arccos(np.clip(c, -1, 1))


def synthetic_library(
    n_materials: int = 12, seed: int = LIBRARY_SEED, min_angle: float = 0.12
) -> SpectralLibrary:
    """Draw ``n_materials`` spectra whose pairwise spectral angles all exceed ``min_angle`` rad."""
    rng = np.random.default_rng(seed)
    wl = wavelength_grid()
    picked: list[np.ndarray] = []
    while len(picked) < n_materials:
        cand = _material(wl, rng)
        if all(_angle(cand, p) >= min_angle for p in picked):
            picked.append(cand)
    names = [f"mat{i + 1:02d}" for i in range(n_materials)]
    # round so the CSV text is short and round-trips exactly
    return SpectralLibrary(wl.round(6), names, np.column_stack(picked).round(6))


if __name__ == "__main__":
    lib = synthetic_library()
    write_spectral_library(lib, default_library_path())
    print(f"wrote {len(lib.names)} materials x {lib.n_bands} bands to {default_library_path()}")
