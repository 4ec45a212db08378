"""Command-line front end: ``hsunmix {synth,unmix,sweep,eval}``.

Settings come from built-in defaults, then an optional INI file given with
``--config``, then command-line flags (highest precedence). Every command
writes a ``manifest.json`` beside its outputs with the fully resolved
settings, the seeds used and a SHA-256 of every file it wrote, which is
enough to rerun it exactly.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from hsunmix import __version__
from hsunmix.evaluation import (
    aggregate_sweep,
    derive_seed,
    evaluate,
    run_sweep,
    write_aggregate_csv,
    write_sweep_csv,
)
from hsunmix.hyperdata import (
    AVIRIS_BAD_BANDS,
    Cube,
    HyperdataError,
    check_simplex,
    default_library_path,
    drop_bands,
    load_spectral_library,
    read_cube,
    write_cube,
    write_spectral_library,
)
from hsunmix.synth import NoiseSpec, SceneSpec, add_noise, count_pure_pixels, render_mixed_scene, render_scene
from hsunmix.unmix import METHODS, AlgoConfig, run_unmixing

# section -> key -> (type, default); keys map 1:1 onto argparse dests
DEFAULTS: dict[str, dict[str, tuple]] = {
    "io": {
        "library": (str, None),
        "out": (str, "out"),
        "input": (str, None),
    },
    "scene": {
        "rows": (int, 64),
        "cols": (int, 64),
        "window": (int, 3),
        "block": (int, 1),
        "endmembers": (str, "mat01,mat02,mat03,mat04"),
        "allow_pure": (bool, False),
        "drop_bad_bands": (bool, False),
    },
    "noise": {
        "snr": (float, 25.0),
    },
    "algo": {
        "method": (str, "sparse_distributed"),
        "p": (int, 4),
        "mu": (float, 0.01),
        "eta": (float, 0.1),
        "lambda": (str, "auto"),
        "max_iter": (int, 400),
        "rel_tol": (float, 1e-6),
        "eps_floor": (float, 1e-4),
        "connectivity": (int, 4),
        "init": (str, "spread"),
    },
    "sweep": {
        "snrs": (str, "15,20,25,30,35"),
        "methods": (str, ",".join(METHODS)),
        "runs": (int, 20),
        "jobs": (int, 1),
        "timing": (bool, False),
    },
    "run": {
        "seed": (int, 0),
    },
}


# settings that can influence each command's outputs
_RELEVANT = {
    "synth": ("scene", "noise", "run", "library"),
    "unmix": ("algo", "run", "input"),
    "sweep": ("scene", "algo", "sweep", "run", "library"),
    "eval": (),
}


class UsageError(Exception):
    """Bad combination of settings; reported like an argparse usage error."""


def _convert(kind, raw):
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"expected {kind.__name__}, got {raw!r}") from None


def resolve_settings(args: argparse.Namespace) -> dict:
    """Flat ``{key: value}`` from defaults, config file and flags, in that order."""
    settings = {key: default for section in DEFAULTS.values() for key, (_, default) in section.items()}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        parser.read(path, encoding="utf-8")
        for section in parser.sections():
            if section not in DEFAULTS:
                raise UsageError(f"unknown config section [{section}] in {path}")
            for key, raw in parser[section].items():
                key = key.replace("-", "_")
                if key not in DEFAULTS[section]:
                    raise UsageError(f"unknown key {key!r} in section [{section}] of {path}")
                settings[key] = _convert(DEFAULTS[section][key][0], raw)
    for section in DEFAULTS.values():
        for key, (kind, _) in section.items():
            value = getattr(args, key.replace("lambda", "lam"), None)
            if value is not None:
                settings[key] = _convert(kind, value)
    return settings


def _csv_list(text: str, kind=str) -> list:
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    try:
        return [kind(t) for t in items]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def _check_method(method: str) -> str:
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")
    return method


def _algo_config(st: dict, seed: int) -> AlgoConfig:
    return AlgoConfig(
        mu=st["mu"],
        eta=st["eta"],
        lam=st["lambda"],
        max_iter=st["max_iter"],
        rel_tol=st["rel_tol"],
        eps_floor=st["eps_floor"],
        connectivity=st["connectivity"],
        seed=seed,
        init=st["init"],
    )


def _scene_spec(st: dict, seed: int) -> SceneSpec:
    return SceneSpec(
        rows=st["rows"],
        cols=st["cols"],
        window=st["window"],
        seed=seed,
        endmember_names=tuple(_csv_list(st["endmembers"])),
        block=st["block"],
    )


def _library(st: dict):
    return load_spectral_library(st["library"] or default_library_path())


def _out_dir(st: dict) -> Path:
    out = Path(st["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _relevant(command: str, settings: dict) -> dict:
    keys = set()
    for name in _RELEVANT[command]:
        keys |= set(DEFAULTS[name]) if name in DEFAULTS else {name}
    keys.discard("jobs")  # worker count never changes a result
    return {k: v for k, v in settings.items() if k in keys}


def _write_manifest(out: Path, command: str, settings: dict, files: list[Path], **extra) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "settings": _relevant(command, settings),
        **extra,
        "files": {p.name: _sha256(p) for p in sorted(files)},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_signatures(path: Path, wavelengths, A: np.ndarray, names) -> None:
    write_spectral_library(wavelengths, path, names=list(names), reflectance=A)


def _band_axis(cube: Cube) -> np.ndarray:
    if cube.band_wavelengths is not None:
        return cube.band_wavelengths
    return np.arange(cube.n_bands, dtype=float)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(st: dict) -> list[Path]:
    lib = _library(st)
    scene_seed = st["seed"]
    spec = _scene_spec(st, scene_seed)
    if st["allow_pure"]:
        clean, A, S = render_scene(lib, spec)
    else:
        clean, A, S, scene_seed = render_mixed_scene(lib, spec)
    if st["drop_bad_bands"]:
        keep = np.delete(np.arange(clean.n_bands), AVIRIS_BAD_BANDS)
        clean = drop_bands(clean, AVIRIS_BAD_BANDS)
        A = A.a[keep]
    else:
        A = A.a
    noise_seed = derive_seed(st["seed"], 1)
    noisy = add_noise(clean, NoiseSpec(st["snr"], noise_seed))

    out = _out_dir(st)
    files = []
    for name, cube in (("clean", clean), ("noisy", noisy)):
        files += [out / f"{name}.hdr", write_cube(cube, out / f"{name}.hdr")]
    _write_signatures(out / "signatures.csv", _band_axis(clean), A, spec.endmember_names)
    files.append(out / "signatures.csv")
    ab = Cube(S.s, clean.rows, clean.cols)
    files += [out / "abundances.hdr", write_cube(ab, out / "abundances.hdr", dtype="float64")]
    files.append(
        _write_manifest(
            out, "synth", st, files,
            scene_seed=scene_seed, noise_seed=noise_seed, pure_pixels=count_pure_pixels(S.s),
        )
    )
    print(f"wrote {len(files)} files to {out}")
    return files


def cmd_unmix(st: dict) -> list[Path]:
    if not st["input"]:
        raise UsageError("unmix needs --input <cube header>")
    method = _check_method(st["method"])
    cube = read_cube(st["input"])
    cfg = _algo_config(st, st["seed"])
    res = run_unmixing(cube, st["p"], method, cfg)

    out = _out_dir(st)
    files = []
    names = [f"em{j + 1}" for j in range(st["p"])]
    _write_signatures(out / "signatures.csv", _band_axis(cube), res.signatures.a, names)
    files.append(out / "signatures.csv")
    ab = Cube(res.abundances.s, cube.rows, cube.cols)
    files += [out / "abundances.hdr", write_cube(ab, out / "abundances.hdr", dtype="float64")]
    with (out / "objective.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective"])
        for i, v in enumerate(res.objective_trace, 1):
            w.writerow([i, repr(float(v))])
    files.append(out / "objective.csv")
    final = repr(float(res.objective_trace[-1])) if len(res.objective_trace) else "nan"
    summary = [
        f"method: {method}",
        f"iterations: {res.iterations_run}",
        f"converged: {str(res.converged).lower()}",
        f"final_objective: {final}",
        f"lambda: {res.lam!r}",
        f"eta: {res.eta!r}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    files.append(out / "summary.txt")
    files.append(_write_manifest(out, "unmix", st, files, input_data_sha256=hashlib.sha256(cube.data.tobytes()).hexdigest()))
    print("\n".join(summary))
    return files


def cmd_sweep(st: dict) -> list[Path]:
    methods = [_check_method(m) for m in _csv_list(st["methods"])]
    if not methods:
        raise UsageError("empty methods list; valid methods: " + ", ".join(METHODS))
    snrs = _csv_list(st["snrs"], float)
    if not snrs:
        raise UsageError("empty SNR list")
    lib = _library(st)
    rows = run_sweep(
        lib,
        _scene_spec(st, 0),
        snrs,
        methods,
        st["runs"],
        _algo_config(st, 0),
        master_seed=st["seed"],
        allow_pure=st["allow_pure"],
        jobs=st["jobs"],
        timing=st["timing"],
    )
    out = _out_dir(st)
    write_sweep_csv(rows, out / "sweep.csv")
    write_aggregate_csv(aggregate_sweep(rows), out / "sweep_mean.csv")
    files = [out / "sweep.csv", out / "sweep_mean.csv"]
    cells = [
        {"snr_db": r.snr_db, "run_seed": r.seed, "scene_seed": r.scene_seed,
         "noise_seed": r.noise_seed, "init_seed": r.init_seed}
        for r in rows[:: len(methods)]
    ]
    files.append(_write_manifest(out, "sweep", st, files, cells=cells))
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return files


def _load_pair(sig_path, ab_path):
    A = load_spectral_library(sig_path).reflectance
    S = read_cube(ab_path).data
    return A, S


def cmd_eval(st: dict, paths: argparse.Namespace) -> list[Path]:
    A_t, S_t = _load_pair(paths.truth_signatures, paths.truth_abundances)
    A_e, S_e = _load_pair(paths.est_signatures, paths.est_abundances)
    if A_t.shape != A_e.shape or S_t.shape != S_e.shape:
        raise HyperdataError(
            f"dimension mismatch: truth signatures {A_t.shape}, abundances {S_t.shape}; "
            f"estimate signatures {A_e.shape}, abundances {S_e.shape}"
        )
    check_simplex(S_e)
    rep = evaluate((A_t, S_t), (A_e, S_e), aggregate=paths.aggregate)
    lines = rep.as_lines()
    print("\n".join(lines))
    out = _out_dir(st)
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    files = [out / "report.txt"]
    inputs = {
        "truth_signatures": str(paths.truth_signatures),
        "truth_abundances": str(paths.truth_abundances),
        "est_signatures": str(paths.est_signatures),
        "est_abundances": str(paths.est_abundances),
        "aggregate": paths.aggregate,
    }
    files.append(_write_manifest(out, "eval", st, files, inputs=inputs))
    return files


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [io], [scene], [noise], [algo], [sweep], [run] sections")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", help="output directory (default ./out)")


def _add_library(p):
    p.add_argument("--library", help="spectral library CSV (default: bundled library)")


def _add_scene(p):
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--window", type=int, help="odd low-pass window size")
    p.add_argument("--block", type=int, help="side of the square tiles that share a label")
    p.add_argument("--endmembers", help="comma-separated library material names")
    p.add_argument("--allow-pure", action="store_const", const=True, default=None,
                   help="keep scenes that contain pure pixels")


def _add_algo(p):
    p.add_argument("--mu", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--lambda", dest="lam", metavar="{auto|VALUE|0}")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--eps-floor", type=float)
    p.add_argument("--connectivity", type=int, choices=(4, 8))
    p.add_argument("--init", choices=("spread", "pixels", "uniform"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hsunmix", description="Sparse distributed hyperspectral unmixing.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene and its ground truth")
    _add_common(p)
    _add_library(p)
    _add_scene(p)
    p.add_argument("--snr", type=float, help="noise level in dB")
    p.add_argument("--drop-bad-bands", action="store_const", const=True, default=None,
                   help="remove the 36 water-vapour and low-SNR bands of a 224-band sensor")

    p = sub.add_parser("unmix", help="estimate signatures and abundances of a cube")
    _add_common(p)
    p.add_argument("--input", help="ENVI header of the cube to unmix")
    p.add_argument("--method", help=f"one of: {', '.join(METHODS)}")
    p.add_argument("-p", "--p", type=int, help="number of endmembers (default 4)")
    _add_algo(p)

    p = sub.add_parser("sweep", help="Monte Carlo SNR sweep")
    _add_common(p)
    _add_library(p)
    _add_scene(p)
    _add_algo(p)
    p.add_argument("--snr", dest="snrs", help="comma-separated SNR values in dB")
    p.add_argument("--method", dest="methods", help="comma-separated methods")
    p.add_argument("--runs", type=int)
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--timing", action="store_const", const=True, default=None,
                   help="record wall time (makes sweep.csv differ between reruns)")

    p = sub.add_parser("eval", help="compare an estimate with ground truth")
    _add_common(p)
    p.add_argument("--truth-signatures", required=True)
    p.add_argument("--truth-abundances", required=True)
    p.add_argument("--est-signatures", required=True)
    p.add_argument("--est-abundances", required=True)
    p.add_argument("--aggregate", choices=("mean", "rms"), default="mean")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        st = resolve_settings(args)
        if args.command == "synth":
            cmd_synth(st)
        elif args.command == "unmix":
            cmd_unmix(st)
        elif args.command == "sweep":
            cmd_sweep(st)
        else:
            cmd_eval(st, args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValueError, OSError, FloatingPointError, LookupError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"hsunmix: error: {msg}".splitlines()[0], file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
