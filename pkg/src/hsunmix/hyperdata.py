"""Data model for hyperspectral cubes, endmember signatures and abundances.

Cubes are stored band-major: ``data`` is an ``L x N`` matrix whose column
``k = r * cols + c`` holds the spectrum of pixel ``(r, c)``.

On disk a cube is a raw binary payload plus a small ENVI-style text header
(``samples``, ``lines``, ``bands``, ``interleave``, ``data type``,
``byte order`` and an optional ``wavelength`` list).
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ASC_TOL = 1e-9

# 0-based indices of the water-vapour / low-SNR AVIRIS bands
# (1-based: 1, 2, 104-113, 148-167, 221-224).
AVIRIS_BAD_BANDS = tuple(
    [0, 1] + list(range(103, 113)) + list(range(147, 167)) + list(range(220, 224))
)

_DTYPE_BY_NAME = {
    "int16": np.dtype(np.int16),
    "float32": np.dtype(np.float32),
    "float64": np.dtype(np.float64),
}
_ENVI_CODE = {"2": "int16", "4": "float32", "5": "float64"}
_NAME_TO_CODE = {v: k for k, v in _ENVI_CODE.items()}
_BYTE_ORDER = {"0": "little", "1": "big", "little": "little", "big": "big"}
_PAYLOAD_SUFFIXES = (".img", "", ".dat", ".raw", ".bsq", ".bil", ".bip")


class HyperdataError(ValueError):
    """Raised for malformed libraries, headers or payloads."""


def _frozen(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class SpectralLibrary:
    """Named reflectance signatures sampled on a common wavelength grid (micrometers)."""

    wavelengths: np.ndarray
    names: tuple[str, ...]
    reflectance: np.ndarray  # L x M, one column per material

    def __post_init__(self):
        wl = _frozen(self.wavelengths)
        refl = _frozen(self.reflectance)
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "reflectance", refl)
        object.__setattr__(self, "names", tuple(self.names))
        if wl.ndim != 1 or wl.size == 0:
            raise HyperdataError("no bands")
        if refl.shape != (wl.size, len(self.names)):
            raise HyperdataError(
                f"reflectance shape {refl.shape} does not match "
                f"{wl.size} bands x {len(self.names)} materials"
            )
        if len(set(self.names)) != len(self.names):
            raise HyperdataError("material names must be unique")
        if np.any(np.diff(wl) <= 0):
            raise HyperdataError("wavelengths must be strictly increasing")
        if np.any(refl < 0):
            raise HyperdataError("reflectance must be nonnegative")

    @property
    def n_bands(self) -> int:
        return self.wavelengths.size

    def signature(self, name: str) -> np.ndarray:
        try:
            return self.reflectance[:, self.names.index(name)]
        except ValueError:
            raise KeyError(f"unknown material {name!r}") from None

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Stack the named signatures as columns of an ``L x p`` matrix."""
        return np.column_stack([self.signature(n) for n in names])


@dataclass(frozen=True)
class Cube:
    """Observed image: ``L x N`` data plus its spatial shape."""

    data: np.ndarray
    rows: int
    cols: int
    band_wavelengths: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype.kind not in "fi":
            raise HyperdataError(f"unsupported cube dtype {data.dtype}")
        data = _frozen(data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise HyperdataError(f"cube data must be a non-empty L x N matrix, got {data.shape}")
        if self.rows < 1 or self.cols < 1 or self.rows * self.cols != data.shape[1]:
            raise HyperdataError(
                f"spatial shape {self.rows}x{self.cols} does not match N={data.shape[1]}"
            )
        if self.band_wavelengths is not None:
            wl = _frozen(self.band_wavelengths)
            if wl.shape != (data.shape[0],):
                raise HyperdataError("band_wavelengths length must equal the band count")
            object.__setattr__(self, "band_wavelengths", wl)

    @property
    def n_bands(self) -> int:
        return self.data.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.data.shape[1]

    def pixel(self, r: int, c: int) -> np.ndarray:
        return self.data[:, r * self.cols + c]

    def image(self) -> np.ndarray:
        """View of the data as ``(L, rows, cols)``."""
        return self.data.reshape(self.n_bands, self.rows, self.cols)

    def equals(self, other: "Cube") -> bool:
        """Bit-exact comparison of data, shape and wavelengths."""
        if (self.rows, self.cols) != (other.rows, other.cols):
            return False
        if self.data.shape != other.data.shape or not np.array_equal(self.data, other.data):
            return False
        if (self.band_wavelengths is None) != (other.band_wavelengths is None):
            return False
        return self.band_wavelengths is None or np.array_equal(
            self.band_wavelengths, other.band_wavelengths
        )


@dataclass(frozen=True)
class Signatures:
    """Endmember matrix ``A`` (``L x p``), nonnegative with no all-zero column."""

    a: np.ndarray

    def __post_init__(self):
        a = _frozen(self.a)
        object.__setattr__(self, "a", a)
        if a.ndim != 2:
            raise HyperdataError("signatures must be an L x p matrix")
        if np.any(a < 0):
            raise HyperdataError("signatures must be nonnegative")
        if np.any(~a.any(axis=0)):
            raise HyperdataError("signature matrix has an all-zero column")

    @property
    def p(self) -> int:
        return self.a.shape[1]


@dataclass(frozen=True)
class Abundances:
    """Abundance matrix ``S`` (``p x N``); every column lies on the probability simplex."""

    s: np.ndarray
    tol: float = field(default=ASC_TOL, repr=False, compare=False)

    def __post_init__(self):
        s = _frozen(self.s)
        object.__setattr__(self, "s", s)
        if s.ndim != 2:
            raise HyperdataError("abundances must be a p x N matrix")
        check_simplex(s, self.tol)

    @property
    def p(self) -> int:
        return self.s.shape[0]


def check_simplex(s: np.ndarray, tol: float = ASC_TOL) -> None:
    """Raise if any column of ``s`` violates nonnegativity or sum-to-one."""
    if np.any(s < 0):
        k = int(np.argwhere(s < 0)[0, 1])
        raise HyperdataError(f"negative abundance at pixel {k}")
    dev = np.abs(s.sum(axis=0) - 1.0)
    if np.any(dev > tol):
        k = int(np.argmax(dev))
        raise HyperdataError(f"abundances at pixel {k} sum to {s[:, k].sum()!r}, not 1")


# ---------------------------------------------------------------------------
# Spectral library CSV
# ---------------------------------------------------------------------------


def default_library_path() -> Path:
    """Path of the bundled synthetic 224-band library."""
    return Path(__file__).with_name("data") / "library.csv"


def load_spectral_library(path) -> SpectralLibrary:
    """Read a ``wavelength,<name1>,<name2>,...`` CSV file.

    Errors name the offending 1-based data row (header excluded) and column.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"spectral library not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise HyperdataError(f"{path}: empty file") from None
        if len(header) < 2 or header[0].lower() != "wavelength":
            raise HyperdataError(f"{path}: header must be 'wavelength,<name>,...'")
        names = header[1:]
        if len(set(names)) != len(names):
            raise HyperdataError(f"{path}: duplicate material names")
        rows = []
        for i, rec in enumerate(reader, start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise HyperdataError(
                    f"{path}: row {i} has {len(rec)} fields, expected {len(header)}"
                )
            vals = []
            for j, f in enumerate(rec):
                try:
                    vals.append(float(f))
                except ValueError:
                    raise HyperdataError(
                        f"{path}: cannot parse {f!r} at row {i}, column {header[j]!r}"
                    ) from None
            if rows and vals[0] <= rows[-1][0]:
                raise HyperdataError(f"{path}: non-increasing wavelengths at row {i}")
            for j, v in enumerate(vals[1:], start=1):
                if v < 0:
                    raise HyperdataError(
                        f"{path}: negative reflectance at row {i}, column {header[j]!r}"
                    )
            rows.append(vals)
    if not rows:
        raise HyperdataError(f"{path}: no bands")
    body = np.array(rows, dtype=float)
    return SpectralLibrary(body[:, 0], names, body[:, 1:])


def write_spectral_library(lib_or_wavelengths, path, names=None, reflectance=None) -> None:
    """Write a library (or a bare ``L x p`` matrix with a wavelength axis) as CSV.

    Floats are written with ``repr`` so a round trip is exact.
    """
    if isinstance(lib_or_wavelengths, SpectralLibrary):
        wl, names, refl = lib_or_wavelengths.wavelengths, lib_or_wavelengths.names, lib_or_wavelengths.reflectance
    else:
        wl, refl = np.asarray(lib_or_wavelengths, float), np.asarray(reflectance, float)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["wavelength", *names])
        for t in range(len(wl)):
            w.writerow([repr(float(wl[t]))] + [repr(float(v)) for v in refl[t]])


# ---------------------------------------------------------------------------
# Cube binary + header
# ---------------------------------------------------------------------------


def parse_header(text: str) -> dict[str, str]:
    """Parse ``key = value`` (or ``key: value``) lines; ``{...}`` values may span lines.

    Keys are lower-cased with spaces and underscores unified to a single space.
    """
    out: dict[str, str] = {}
    # fold brace blocks onto one line
    text = re.sub(r"\{[^}]*\}", lambda m: " ".join(m.group(0).split()), text)
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith(";") or line.upper() == "ENVI":
            continue
        m = re.match(r"^([^=:]+?)\s*[=:]\s*(.*)$", line)
        if not m:
            raise HyperdataError(f"malformed header line: {line!r}")
        key = " ".join(m.group(1).lower().replace("_", " ").split())
        out[key] = m.group(2).strip()
    return out


def _header_int(hdr, key):
    try:
        v = int(hdr[key])
    except KeyError:
        raise HyperdataError(f"header missing {key!r}") from None
    except ValueError:
        raise HyperdataError(f"header {key!r} is not an integer: {hdr[key]!r}") from None
    if v < 1:
        raise HyperdataError(f"header {key!r} must be positive, got {v}")
    return v


def _payload_path(header_path: Path) -> Path:
    for suffix in _PAYLOAD_SUFFIXES:
        cand = header_path.with_suffix(suffix)
        if cand != header_path and cand.exists():
            return cand
    raise FileNotFoundError(f"no binary payload found next to {header_path}")


def read_cube(header_path) -> Cube:
    """Load a cube from its text header and the sibling binary payload.

    Any of bsq/bil/bip interleaves is accepted; integer data are converted to
    floats without scaling.
    """
    header_path = Path(header_path)
    hdr = parse_header(header_path.read_text(encoding="utf-8"))
    samples = _header_int(hdr, "samples")
    lines = _header_int(hdr, "lines")
    bands = _header_int(hdr, "bands")

    interleave = hdr.get("interleave", "bsq").lower()
    if interleave not in ("bsq", "bil", "bip"):
        raise HyperdataError(f"unknown interleave {interleave!r}")
    dt_raw = hdr.get("data type", "").lower()
    dt_name = _ENVI_CODE.get(dt_raw, dt_raw)
    if dt_name not in _DTYPE_BY_NAME:
        raise HyperdataError(f"unknown data type {hdr.get('data type')!r}")
    order = _BYTE_ORDER.get(hdr.get("byte order", "0").lower())
    if order is None:
        raise HyperdataError(f"unknown byte order {hdr['byte order']!r}")
    dtype = _DTYPE_BY_NAME[dt_name].newbyteorder("<" if order == "little" else ">")

    payload = _payload_path(header_path).read_bytes()
    n_items = samples * lines * bands
    expected = n_items * dtype.itemsize
    if len(payload) != expected:
        raise HyperdataError(
            f"payload size mismatch: expected {expected} bytes, got {len(payload)}"
        )
    raw = np.frombuffer(payload, dtype=dtype)
    if interleave == "bsq":
        arr = raw.reshape(bands, lines, samples)
    elif interleave == "bil":
        arr = raw.reshape(lines, bands, samples).transpose(1, 0, 2)
    else:
        arr = raw.reshape(lines, samples, bands).transpose(2, 0, 1)
    data = arr.reshape(bands, lines * samples).astype(np.float64)

    wl = None
    if "wavelength" in hdr:
        wl = np.array([float(v) for v in hdr["wavelength"].strip("{} ").split(",") if v.strip()])
        if wl.size != bands:
            raise HyperdataError(f"header lists {wl.size} wavelengths for {bands} bands")
    return Cube(data, rows=lines, cols=samples, band_wavelengths=wl)


def write_cube(cube: Cube, header_path, dtype: str | None = None, interleave: str = "bsq") -> Path:
    """Write ``cube`` as a little-endian payload (``<stem>.img``) and a header.

    ``dtype=None`` writes float32 when that is lossless and float64 otherwise,
    so ``read_cube`` always returns bit-identical data. Returns the payload path.
    """
    header_path = Path(header_path)
    data = cube.data
    if dtype is None:
        lossless = np.array_equal(data.astype(np.float32).astype(np.float64), data)
        dtype = "float32" if lossless else "float64"
    if dtype not in _DTYPE_BY_NAME:
        raise HyperdataError(f"unknown data type {dtype!r}")
    if interleave not in ("bsq", "bil", "bip"):
        raise HyperdataError(f"unknown interleave {interleave!r}")
    arr = data.reshape(cube.n_bands, cube.rows, cube.cols)
    if interleave == "bil":
        arr = arr.transpose(1, 0, 2)
    elif interleave == "bip":
        arr = arr.transpose(1, 2, 0)
    payload = np.ascontiguousarray(arr, dtype=_DTYPE_BY_NAME[dtype].newbyteorder("<"))

    lines = [
        "ENVI",
        f"samples = {cube.cols}",
        f"lines = {cube.rows}",
        f"bands = {cube.n_bands}",
        "header offset = 0",
        f"data type = {_NAME_TO_CODE[dtype]}",
        f"interleave = {interleave}",
        "byte order = 0",
    ]
    if cube.band_wavelengths is not None:
        lines.append("wavelength units = Micrometers")
        lines.append("wavelength = {" + ", ".join(repr(float(w)) for w in cube.band_wavelengths) + "}")
    payload_path = header_path.with_suffix(".img")
    payload_path.write_bytes(payload.tobytes())
    header_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return payload_path


def drop_bands(cube: Cube, bands: Iterable[int]) -> Cube:
    """Remove the listed (0-based) bands, keeping the order of the rest."""
    drop = sorted(set(int(b) for b in bands))
    bad = [b for b in drop if b < 0 or b >= cube.n_bands]
    if bad:
        raise IndexError(f"band indices out of range [0, {cube.n_bands}): {bad}")
    keep = np.setdiff1d(np.arange(cube.n_bands), drop)
    if keep.size == 0:
        raise HyperdataError("empty cube")
    wl = None if cube.band_wavelengths is None else cube.band_wavelengths[keep]
    return Cube(cube.data[keep], cube.rows, cube.cols, wl)
