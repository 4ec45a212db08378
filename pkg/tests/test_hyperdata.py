import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hsunmix.hyperdata import (
    AVIRIS_BAD_BANDS,
    Abundances,
    Cube,
    HyperdataError,
    Signatures,
    default_library_path,
    drop_bands,
    load_spectral_library,
    parse_header,
    read_cube,
    write_cube,
    write_spectral_library,
)


def _csv(tmp_path, text):
    p = tmp_path / "lib.csv"
    p.write_text(text)
    return p


def test_load_library_basic(tmp_path):
    lib = load_spectral_library(_csv(tmp_path, "wavelength,a,b\n0.4,0.1,0.2\n0.5,0.3,0.4\n0.6,0.5,0.6\n"))
    assert lib.n_bands == 3
    assert lib.names == ("a", "b")
    np.testing.assert_array_equal(lib.signature("b"), [0.2, 0.4, 0.6])


def test_load_library_non_increasing(tmp_path):
    with pytest.raises(HyperdataError, match="non-increasing wavelengths at row 2"):
        load_spectral_library(_csv(tmp_path, "wavelength,a\n0.4,0.1\n0.4,0.2\n0.5,0.3\n"))


def test_load_library_empty_body(tmp_path):
    with pytest.raises(HyperdataError, match="no bands"):
        load_spectral_library(_csv(tmp_path, "wavelength,a,b\n"))


@pytest.mark.parametrize(
    "body, msg",
    [
        ("0.4,0.1,-0.2\n", "negative reflectance at row 1, column 'b'"),
        ("0.4,0.1,x\n", "cannot parse 'x' at row 1, column 'b'"),
        ("0.4,0.1\n", "row 1 has 2 fields"),
    ],
)
def test_load_library_errors_name_location(tmp_path, body, msg):
    with pytest.raises(HyperdataError, match=msg):
        load_spectral_library(_csv(tmp_path, "wavelength,a,b\n" + body))


def test_load_library_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_spectral_library(tmp_path / "nope.csv")


def test_library_csv_round_trip(tmp_path):
    lib = load_spectral_library(default_library_path())
    write_spectral_library(lib, tmp_path / "copy.csv")
    again = load_spectral_library(tmp_path / "copy.csv")
    assert again.names == lib.names
    np.testing.assert_array_equal(again.reflectance, lib.reflectance)
    np.testing.assert_array_equal(again.wavelengths, lib.wavelengths)


def test_bundled_library_shape():
    lib = load_spectral_library(default_library_path())
    assert lib.n_bands == 224
    assert lib.wavelengths[0] == pytest.approx(0.38)
    assert lib.wavelengths[-1] == pytest.approx(2.5)
    assert np.all(lib.reflectance >= 0) and np.all(lib.reflectance <= 1)


def _cube(L=3, rows=2, cols=2, seed=0, wl=True):
    rng = np.random.default_rng(seed)
    data = rng.uniform(0, 1, (L, rows * cols)).astype(np.float32).astype(float)
    return Cube(data, rows, cols, np.linspace(0.4, 2.5, L) if wl else None)


def test_pixel_indexing_row_major():
    cube = _cube(L=2, rows=3, cols=4)
    img = cube.image()
    for r in range(3):
        for c in range(4):
            np.testing.assert_array_equal(cube.pixel(r, c), cube.data[:, r * 4 + c])
            np.testing.assert_array_equal(img[:, r, c], cube.data[:, r * 4 + c])


def test_cube_is_immutable():
    cube = _cube()
    with pytest.raises(ValueError):
        cube.data[0, 0] = 1.0


def test_cube_shape_mismatch():
    with pytest.raises(HyperdataError, match="does not match N=4"):
        Cube(np.zeros((3, 4)), 3, 3)


def test_write_read_round_trip_bsq(tmp_path):
    cube = _cube()
    write_cube(cube, tmp_path / "c.hdr")
    back = read_cube(tmp_path / "c.hdr")
    assert (back.n_bands, back.n_pixels) == (3, 4)
    assert back.equals(cube)


@pytest.mark.parametrize("interleave", ["bil", "bip"])
def test_interleave_invariance(tmp_path, interleave):
    cube = _cube(L=5, rows=3, cols=4)
    write_cube(cube, tmp_path / "bsq.hdr")
    write_cube(cube, tmp_path / "other.hdr", interleave=interleave)
    assert read_cube(tmp_path / "other.hdr").equals(read_cube(tmp_path / "bsq.hdr"))


def test_float64_data_round_trips_exactly(tmp_path):
    rng = np.random.default_rng(3)
    cube = Cube(rng.normal(size=(4, 6)), 2, 3)
    write_cube(cube, tmp_path / "c.hdr")
    assert "data type = 5" in (tmp_path / "c.hdr").read_text()
    assert read_cube(tmp_path / "c.hdr").equals(cube)


def test_single_element_cube_payload_is_four_bytes(tmp_path):
    cube = Cube(np.array([[0.5]]), 1, 1)
    payload = write_cube(cube, tmp_path / "one.hdr")
    assert payload.stat().st_size == 4
    assert read_cube(tmp_path / "one.hdr").equals(cube)


def test_write_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_cube(_cube(), tmp_path / "missing_dir" / "c.hdr")


def test_truncated_payload(tmp_path):
    write_cube(_cube(), tmp_path / "c.hdr")
    img = tmp_path / "c.img"
    img.write_bytes(img.read_bytes()[:-4])
    with pytest.raises(HyperdataError, match="expected 48 bytes, got 44"):
        read_cube(tmp_path / "c.hdr")


def _write_raw(tmp_path, arr, header):
    (tmp_path / "raw.img").write_bytes(arr.tobytes())
    (tmp_path / "raw.hdr").write_text(header)
    return tmp_path / "raw.hdr"


def test_int16_big_endian_bip_named_keys(tmp_path):
    # 1 line, 2 samples, 3 bands, stored pixel-interleaved
    vals = np.array([1, 2, 3, 4, 5, 6], dtype=">i2")
    hdr = _write_raw(
        tmp_path,
        vals,
        "samples: 2\nlines: 1\nbands: 3\ninterleave: bip\ndata_type: int16\nbyte_order: big\n",
    )
    cube = read_cube(hdr)
    np.testing.assert_array_equal(cube.data, [[1, 4], [2, 5], [3, 6]])
    assert cube.data.dtype == np.float64


@pytest.mark.parametrize(
    "extra, msg",
    [
        ("interleave = bxq\ndata type = 4\n", "unknown interleave"),
        ("interleave = bsq\ndata type = 12\n", "unknown data type"),
    ],
)
def test_bad_header_values(tmp_path, extra, msg):
    hdr = _write_raw(tmp_path, np.zeros(4, "<f4"), "ENVI\nsamples = 2\nlines = 2\nbands = 1\n" + extra)
    with pytest.raises(HyperdataError, match=msg):
        read_cube(hdr)


def test_parse_header_multiline_braces():
    hdr = parse_header("ENVI\nsamples = 3\nwavelength = {0.4,\n 0.5,\n 0.6}\nData Type = 4\n")
    assert hdr["samples"] == "3"
    assert hdr["data type"] == "4"
    assert [float(x) for x in hdr["wavelength"].strip("{} ").split(",")] == [0.4, 0.5, 0.6]


def test_drop_aviris_bands():
    assert len(AVIRIS_BAD_BANDS) == 36
    cube = Cube(np.tile(np.arange(224.0)[:, None], (1, 4)), 2, 2, np.linspace(0.4, 2.5, 224))
    out = drop_bands(cube, AVIRIS_BAD_BANDS)
    assert out.n_bands == 188
    assert out.n_pixels == 4
    # 1-based bands 3..103 survive as the first 101 rows
    np.testing.assert_array_equal(out.data[:101, 0], np.arange(2, 103))
    np.testing.assert_array_equal(out.band_wavelengths, np.delete(cube.band_wavelengths, AVIRIS_BAD_BANDS))


def test_drop_no_bands_is_identity():
    cube = _cube()
    assert drop_bands(cube, []).equals(cube)


def test_drop_all_bands():
    with pytest.raises(HyperdataError, match="empty cube"):
        drop_bands(_cube(), range(3))


def test_drop_out_of_range():
    with pytest.raises(IndexError):
        drop_bands(_cube(), [3])


def test_abundance_and_signature_invariants():
    Abundances(np.array([[0.25, 1.0], [0.75, 0.0]]))
    with pytest.raises(HyperdataError, match="sum to"):
        Abundances(np.array([[0.5, 1.0], [0.6, 0.0]]))
    with pytest.raises(HyperdataError, match="negative"):
        Abundances(np.array([[1.5, 1.0], [-0.5, 0.0]]))
    with pytest.raises(HyperdataError, match="all-zero column"):
        Signatures(np.array([[1.0, 0.0], [2.0, 0.0]]))


@settings(max_examples=30, deadline=None)
@given(
    L=st.integers(1, 5),
    rows=st.integers(1, 4),
    cols=st.integers(1, 4),
    seed=st.integers(0, 2**32 - 1),
    interleave=st.sampled_from(["bsq", "bil", "bip"]),
)
def test_round_trip_property(tmp_path_factory, L, rows, cols, seed, interleave):
    tmp = tmp_path_factory.mktemp("rt")
    rng = np.random.default_rng(seed)
    cube = Cube(rng.normal(size=(L, rows * cols)), rows, cols)
    write_cube(cube, tmp / "c.hdr", interleave=interleave)
    assert read_cube(tmp / "c.hdr").equals(cube)
