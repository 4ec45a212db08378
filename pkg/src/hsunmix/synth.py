"""Synthetic scene generation: random pure-pixel map, window mixing, additive noise."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from hsunmix.hyperdata import Abundances, Cube, Signatures, SpectralLibrary


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    rows: int = 64
    cols: int = 64
    window: int = 3
    seed: int = 0
    endmember_names: tuple[str, ...] = ("mat01", "mat02", "mat03", "mat04")
    block: int = 1  # side of the square tiles sharing one label; 1 = per pixel

    def __post_init__(self):
        object.__setattr__(self, "endmember_names", tuple(self.endmember_names))
        if self.p < 2:
            raise SynthError("a scene needs at least two endmembers")
        if self.window < 1 or self.window % 2 == 0:
            raise SynthError(f"window must be a positive odd integer, got {self.window}")
        if self.rows < self.window or self.cols < self.window:
            raise SynthError(
                f"image {self.rows}x{self.cols} is smaller than the {self.window}x{self.window} window"
            )
        if self.block < 1:
            raise SynthError(f"block must be >= 1, got {self.block}")

    @property
    def p(self) -> int:
        return len(self.endmember_names)


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float = 25.0
    seed: int = 0


def generate_pure_map(spec: SceneSpec) -> np.ndarray:
    """One-hot ``p x N`` abundances with materials drawn uniformly.

    With ``spec.block > 1`` one label is drawn per ``block x block`` tile.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.rows * spec.cols
    b = spec.block
    tiles = rng.integers(0, spec.p, size=(-(-spec.rows // b), -(-spec.cols // b)))
    labels = np.kron(tiles, np.ones((b, b), dtype=int))[: spec.rows, : spec.cols].ravel()
    pure = np.zeros((spec.p, n))
    pure[labels, np.arange(n)] = 1.0
    return pure


def mix_abundances(pure, rows: int, cols: int, window: int) -> np.ndarray:
    """Average each pixel's abundances over the ``window x window`` box around it.

    At borders only in-bounds pixels are averaged, so every output column is a
    convex combination of input columns.
    """
    pure = np.asarray(pure, float)
    if window < 1 or window % 2 == 0:
        raise SynthError(f"window must be a positive odd integer, got {window}")
    if window > rows and window > cols:
        raise SynthError(f"window {window} larger than image {rows}x{cols}")
    p = pure.shape[0]
    h = window // 2
    img = pure.reshape(p, rows, cols)
    padded = np.pad(img, ((0, 0), (h, h), (h, h)))
    inside = np.pad(np.ones((rows, cols)), h)
    total = np.zeros_like(img)
    count = np.zeros((rows, cols))
    for dr in range(window):
        for dc in range(window):
            total += padded[:, dr:dr + rows, dc:dc + cols]
            count += inside[dr:dr + rows, dc:dc + cols]
    return (total / count).reshape(p, rows * cols)


def count_pure_pixels(s, tol: float = 1e-12) -> int:
    """Number of columns with an entry above ``1 - tol``."""
    return int(np.count_nonzero(np.asarray(s).max(axis=0) > 1.0 - tol))


def render_scene(lib: SpectralLibrary, spec: SceneSpec) -> tuple[Cube, Signatures, Abundances]:
    """Noise-free scene ``Y = A S`` with its ground truth."""
    missing = [n for n in spec.endmember_names if n not in lib.names]
    if missing:
        raise SynthError(f"unknown material(s) {missing}; library has {list(lib.names)}")
    A = lib.matrix(spec.endmember_names)
    S = mix_abundances(generate_pure_map(spec), spec.rows, spec.cols, spec.window)
    cube = Cube(A @ S, spec.rows, spec.cols, lib.wavelengths)
    return cube, Signatures(A), Abundances(S, tol=1e-12)


def render_mixed_scene(
    lib: SpectralLibrary, spec: SceneSpec, max_attempts: int = 100
) -> tuple[Cube, Signatures, Abundances, int]:
    """Like :func:`render_scene` but redraws until no pixel is pure.

    Seeds are tried in the order ``spec.seed, spec.seed + 1, ...``; the seed
    actually used is returned last.
    """
    for i in range(max_attempts):
        trial = replace(spec, seed=spec.seed + i)
        cube, A, S = render_scene(lib, trial)
        if count_pure_pixels(S.s) == 0:
            return cube, A, S, trial.seed
    raise SynthError(f"no scene without pure pixels after {max_attempts} seeds")


def noise_sigma(cube: Cube, snr_db: float) -> float:
    power = float(np.mean(cube.data ** 2))
    if power == 0:
        raise SynthError("zero signal power")
    return float(np.sqrt(power / 10.0 ** (snr_db / 10.0)))


def add_noise(cube: Cube, noise: NoiseSpec) -> Cube:
    """Add white Gaussian noise at the requested whole-cube SNR."""
    sigma = noise_sigma(cube, noise.snr_db)
    rng = np.random.default_rng(noise.seed)
    eps = rng.standard_normal(cube.data.shape) * sigma
    return Cube(cube.data + eps, cube.rows, cube.cols, cube.band_wavelengths)
