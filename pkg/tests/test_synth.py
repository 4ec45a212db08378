import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hsunmix.hyperdata import Cube, drop_bands, load_spectral_library, default_library_path
from hsunmix.synth import (
    NoiseSpec,
    SceneSpec,
    SynthError,
    add_noise,
    count_pure_pixels,
    generate_pure_map,
    mix_abundances,
    render_mixed_scene,
    render_scene,
)

NAMES4 = ("mat01", "mat02", "mat03", "mat04")


@pytest.fixture(scope="module")
def lib():
    return load_spectral_library(default_library_path())


def _box_filter_oracle(img, window):
    """Per-pixel loop over the in-bounds window, independent of the vectorized path."""
    rows, cols = img.shape[-2:]
    h = window // 2
    out = np.zeros_like(img, dtype=float)
    for r in range(rows):
        for c in range(cols):
            r0, r1 = max(r - h, 0), min(r + h + 1, rows)
            c0, c1 = max(c - h, 0), min(c + h + 1, cols)
            out[..., r, c] = img[..., r0:r1, c0:c1].mean(axis=(-2, -1))
    return out


def test_pure_map_one_hot():
    pure = generate_pure_map(SceneSpec(64, 64, 3, 7, NAMES4))
    assert pure.shape == (4, 4096)
    assert set(np.unique(pure)) == {0.0, 1.0}
    np.testing.assert_array_equal(pure.sum(axis=0), 1.0)


def test_pure_map_deterministic():
    spec = SceneSpec(16, 16, 3, 11, NAMES4)
    np.testing.assert_array_equal(generate_pure_map(spec), generate_pure_map(spec))


def test_pure_map_counts_small():
    pure = generate_pure_map(SceneSpec(4, 4, 3, 5, ("mat01", "mat02")))
    counts = pure.sum(axis=1)
    assert np.all((counts >= 0) & (counts <= 16))
    assert counts.sum() == 16


def test_pure_map_blocks():
    pure = generate_pure_map(SceneSpec(10, 12, 3, 2, NAMES4, block=4))
    labels = pure.argmax(axis=0).reshape(10, 12)
    for br in range(0, 10, 4):
        for bc in range(0, 12, 4):
            assert len(np.unique(labels[br:br + 4, bc:bc + 4])) == 1


def test_mix_single_material_stays_one_hot():
    pure = np.zeros((2, 25))
    pure[0] = 1.0
    np.testing.assert_array_equal(mix_abundances(pure, 5, 5, 3), pure)


def test_mix_interior_counting():
    labels = np.array([[0, 0, 0], [1, 1, 1], [1, 1, 1]]).ravel()
    pure = np.zeros((2, 9))
    pure[labels, np.arange(9)] = 1
    mixed = mix_abundances(pure, 3, 3, 3)
    np.testing.assert_allclose(mixed[:, 4], [1 / 3, 2 / 3], atol=1e-15)


def test_mix_window_one_is_identity():
    pure = generate_pure_map(SceneSpec(6, 7, 1, 3, NAMES4))
    np.testing.assert_array_equal(mix_abundances(pure, 6, 7, 1), pure)


@pytest.mark.parametrize("window, msg", [(2, "odd"), (9, "larger than image")])
def test_mix_window_errors(window, msg):
    with pytest.raises(SynthError, match=msg):
        mix_abundances(np.ones((1, 16)), 4, 4, window)


@settings(max_examples=25, deadline=None)
@given(
    rows=st.integers(3, 9),
    cols=st.integers(3, 9),
    window=st.sampled_from([1, 3, 5]),
    seed=st.integers(0, 10_000),
    block=st.integers(1, 3),
)
def test_mix_matches_loop_and_stays_on_simplex(rows, cols, window, seed, block):
    if window > min(rows, cols):
        return
    spec = SceneSpec(rows, cols, window, seed, NAMES4, block=block)
    pure = generate_pure_map(spec)
    mixed = mix_abundances(pure, rows, cols, window)
    oracle = _box_filter_oracle(pure.reshape(4, rows, cols), window).reshape(4, -1)
    np.testing.assert_allclose(mixed, oracle, atol=1e-15)
    assert np.all(mixed >= 0)
    assert np.max(np.abs(mixed.sum(axis=0) - 1)) < 1e-12


def test_mixing_commutes_with_rendering(lib):
    spec = SceneSpec(9, 8, 3, 4, NAMES4)
    A = lib.matrix(NAMES4)
    pure = generate_pure_map(spec)
    mixed_then_render = A @ mix_abundances(pure, 9, 8, 3)
    render_then_filter = mix_abundances(A @ pure, 9, 8, 3)
    np.testing.assert_allclose(mixed_then_render, render_then_filter, atol=1e-12)


def test_render_pure_pixels_match_library(lib):
    cube, A, S = render_scene(lib, SceneSpec(5, 5, 1, 0, NAMES4))
    for k in range(25):
        j = int(S.s[:, k].argmax())
        np.testing.assert_array_equal(cube.data[:, k], lib.signature(NAMES4[j]))


def test_render_half_half_pixel(lib):
    # corner window covers 2 px of each material
    labels = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]).ravel()
    pure = np.zeros((2, 9))
    pure[labels, np.arange(9)] = 1
    s = mix_abundances(pure, 3, 3, 3)
    A = lib.matrix(("mat01", "mat02"))
    np.testing.assert_allclose(s[:, 1], [0.5, 0.5])
    np.testing.assert_allclose(A @ s[:, 1], A.mean(axis=1), atol=1e-15)


def test_render_residual_zero(lib):
    cube, A, S = render_scene(lib, SceneSpec(16, 16, 3, 2, NAMES4))
    assert np.max(np.abs(cube.data - A.a @ S.s)) == 0.0
    assert cube.rows == 16 and cube.n_bands == 224


def test_render_unknown_material(lib):
    with pytest.raises(SynthError, match="nope"):
        render_scene(lib, SceneSpec(4, 4, 3, 0, ("mat01", "nope")))


def test_spec_invariants():
    with pytest.raises(SynthError):
        SceneSpec(8, 8, 4, 0, NAMES4)
    with pytest.raises(SynthError):
        SceneSpec(8, 8, 3, 0, ("mat01",))
    with pytest.raises(SynthError):
        SceneSpec(2, 8, 3, 0, NAMES4)


def test_render_mixed_scene_has_no_pure_pixels(lib):
    cube, A, S, seed = render_mixed_scene(lib, SceneSpec(16, 16, 3, 0, NAMES4))
    assert count_pure_pixels(S.s) == 0
    assert seed >= 0


def test_add_noise_vanishing(lib):
    cube, _, _ = render_scene(lib, SceneSpec(8, 8, 3, 0, NAMES4))
    noisy = add_noise(cube, NoiseSpec(300.0, 1))
    np.testing.assert_allclose(noisy.data, cube.data, rtol=1e-10, atol=0)


def test_add_noise_realized_snr(lib):
    cube, _, _ = render_scene(lib, SceneSpec(64, 64, 3, 3, NAMES4))
    cube = drop_bands(cube, range(188, 224))
    assert (cube.n_bands, cube.n_pixels) == (188, 4096)
    noisy = add_noise(cube, NoiseSpec(25.0, 9))
    p_signal = np.mean(cube.data ** 2)
    p_noise = np.mean((noisy.data - cube.data) ** 2)
    assert abs(10 * np.log10(p_signal / p_noise) - 25.0) < 0.2


def test_add_noise_deterministic(lib):
    cube, _, _ = render_scene(lib, SceneSpec(8, 8, 3, 0, NAMES4))
    a = add_noise(cube, NoiseSpec(20.0, 5))
    b = add_noise(cube, NoiseSpec(20.0, 5))
    c = add_noise(cube, NoiseSpec(20.0, 6))
    assert a.equals(b)
    assert not a.equals(c)


def test_add_noise_zero_signal():
    with pytest.raises(SynthError, match="zero signal power"):
        add_noise(Cube(np.zeros((3, 4)), 2, 2), NoiseSpec(10.0, 0))
