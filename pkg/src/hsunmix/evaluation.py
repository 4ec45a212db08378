"""Angle metrics, endmember matching and the Monte Carlo SNR sweep."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from hsunmix.hyperdata import SpectralLibrary
from hsunmix.synth import NoiseSpec, SceneSpec, add_noise, render_mixed_scene, render_scene
from hsunmix.unmix import METHODS, AlgoConfig, run_unmixing

SWEEP_HEADER = ("snr_db", "method", "seed", "sad_mean", "aad_mean", "iterations", "wall_seconds")


class EvalError(ValueError):
    pass


def _angle(u, v) -> float:
    return float(column_angles(np.reshape(u, (-1, 1)), np.reshape(v, (-1, 1)))[0])


def sad(a, a_hat) -> float:
    """Spectral angle distance in radians."""
    return _angle(a, a_hat)


def aad(s, s_hat) -> float:
    """Abundance angle distance in radians."""
    return _angle(s, s_hat)


def _unit_columns(X) -> np.ndarray:
    # fixed memory order so equal data always gets the same summation order
    X = np.ascontiguousarray(X, dtype=float)
    n = np.linalg.norm(X, axis=0)
    if np.any(n == 0):
        raise EvalError("angle undefined for a zero-norm column")
    return X / n


def _stable_arccos(U, V) -> np.ndarray:
    # arccos(u.v) for unit columns, written as 2 atan2(|u - v|, |u + v|): same
    # value, but accurate near 0 and pi where arccos of a rounded cosine is not
    return 2.0 * np.arctan2(np.linalg.norm(U - V, axis=0), np.linalg.norm(U + V, axis=0))


def column_angles(X, X_hat) -> np.ndarray:
    """Angle between matching columns of two matrices."""
    return _stable_arccos(_unit_columns(X), _unit_columns(X_hat))


def sad_matrix(A_true, A_est) -> np.ndarray:
    """``[i, j]`` = SAD between estimated column ``i`` and true column ``j``."""
    At = _unit_columns(A_true)
    Ae = _unit_columns(A_est)
    return _stable_arccos(Ae[:, :, None], At[:, None, :])


def match_endmembers(A_true, A_est) -> np.ndarray:
    """Assignment ``perm`` (estimated index -> true index) minimizing total SAD."""
    A_true = np.asarray(A_true)
    A_est = np.asarray(A_est)
    if A_true.shape != A_est.shape:
        raise EvalError(f"shape mismatch: truth {A_true.shape} vs estimate {A_est.shape}")
    rows, cols = linear_sum_assignment(sad_matrix(A_true, A_est))
    perm = np.empty(A_est.shape[1], dtype=int)
    perm[rows] = cols
    return perm


@dataclass
class MetricReport:
    sad_per_endmember: np.ndarray  # indexed by ground-truth endmember
    sad_mean: float
    aad_mean: float
    matching: np.ndarray  # estimated index -> true index

    def as_lines(self) -> list[str]:
        lines = [f"sad_mean: {self.sad_mean!r}", f"aad_mean: {self.aad_mean!r}"]
        lines += [f"sad_{j}: {float(v)!r}" for j, v in enumerate(self.sad_per_endmember)]
        lines.append("matching: " + " ".join(str(int(j)) for j in self.matching))
        return lines


def evaluate(truth, est, aggregate: str = "mean") -> MetricReport:
    """Match estimated endmembers to the truth and report SAD and AAD.

    ``truth`` and ``est`` are ``(A, S)`` pairs (arrays or the dataclasses).
    ``aggregate="rms"`` reports root-mean-square angles instead of means.
    """
    A_t, S_t = (np.asarray(getattr(x, "a", getattr(x, "s", x)), float) for x in truth)
    A_e, S_e = (np.asarray(getattr(x, "a", getattr(x, "s", x)), float) for x in est)
    if A_t.shape != A_e.shape or S_t.shape != S_e.shape:
        raise EvalError(
            f"dimension mismatch: truth A{A_t.shape} S{S_t.shape} vs estimate A{A_e.shape} S{S_e.shape}"
        )
    perm = match_endmembers(A_t, A_e)
    order = np.argsort(perm)  # order[j] = estimated index matched to truth j
    sads = column_angles(A_t, A_e[:, order])
    aads = column_angles(S_t, S_e[order])
    if aggregate == "mean":
        agg = np.mean
    elif aggregate == "rms":
        agg = lambda x: np.sqrt(np.mean(np.square(x)))  # noqa: E731
    else:
        raise EvalError(f"unknown aggregate {aggregate!r}")
    return MetricReport(sads, float(agg(sads)), float(agg(aads)), perm)


# ---------------------------------------------------------------------------
# Monte Carlo sweep
# ---------------------------------------------------------------------------


def derive_seed(master: int, *key: int) -> int:
    """Deterministic 32-bit seed for a cell of the experiment grid."""
    return int(np.random.SeedSequence(master, spawn_key=tuple(key)).generate_state(1)[0])


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    method: str
    seed: int
    sad_mean: float
    aad_mean: float
    iterations: int
    wall_seconds: float
    scene_seed: int = 0
    noise_seed: int = 0
    init_seed: int = 0
    sqrt_abundance_sum: float = 0.0


def _run_cell(args) -> list[SweepRow]:
    lib, scene, snr, run, methods, cfg, master, allow_pure, timing = args
    run_seed = derive_seed(master, run)
    scene_spec = replace(scene, seed=derive_seed(master, run, 0))
    if allow_pure:
        clean, A, S = render_scene(lib, scene_spec)
        scene_seed = scene_spec.seed
    else:
        clean, A, S, scene_seed = render_mixed_scene(lib, scene_spec)
    noise_seed = derive_seed(master, run, 1, int(round(snr * 1000)))
    noisy = add_noise(clean, NoiseSpec(snr, noise_seed))
    init_seed = derive_seed(master, run, 2)
    run_cfg = replace(cfg, seed=init_seed)
    rows = []
    for method in methods:
        t0 = time.perf_counter()
        res = run_unmixing(noisy, len(scene.endmember_names), method, run_cfg)
        elapsed = time.perf_counter() - t0 if timing else float("nan")
        rep = evaluate((A, S), (res.signatures, res.abundances))
        rows.append(
            SweepRow(
                snr, method, run_seed, rep.sad_mean, rep.aad_mean, res.iterations_run, elapsed,
                scene_seed, noise_seed, init_seed, float(np.sqrt(res.abundances.s).sum()),
            )
        )
    return rows


def run_sweep(
    lib: SpectralLibrary,
    scene: SceneSpec,
    snrs: Sequence[float],
    methods: Sequence[str],
    runs: int,
    cfg: AlgoConfig = AlgoConfig(),
    master_seed: int = 0,
    allow_pure: bool = False,
    jobs: int = 1,
    timing: bool = False,
) -> list[SweepRow]:
    """SNR x run grid; every method sees the same scene, noise and initialization.

    The scene depends only on ``(master_seed, run)``, noise on
    ``(master_seed, run, snr)``. Rows come back ordered by snr, run, method
    whatever ``jobs`` is. Wall time is recorded only when ``timing`` is set,
    otherwise ``nan`` keeps the output reproducible.
    """
    if runs < 1:
        raise EvalError("runs must be >= 1")
    if not methods:
        raise EvalError("no methods given")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise EvalError(f"unknown method(s) {bad}; valid methods: {', '.join(METHODS)}")
    cells = [
        (lib, scene, float(snr), run, tuple(methods), cfg, master_seed, allow_pure, timing)
        for snr in snrs
        for run in range(runs)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    return [row for cell in results for row in cell]


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([repr(r.snr_db), r.method, r.seed, repr(r.sad_mean), repr(r.aad_mean),
                        r.iterations, repr(r.wall_seconds)])


def aggregate_sweep(rows: Sequence[SweepRow]) -> list[dict]:
    """Mean SAD/AAD/iterations per (snr, method), in first-seen order."""
    groups: dict[tuple, list[SweepRow]] = {}
    for r in rows:
        groups.setdefault((r.snr_db, r.method), []).append(r)
    out = []
    for (snr, method), rs in groups.items():
        out.append({
            "snr_db": snr,
            "method": method,
            "runs": len(rs),
            "sad_mean": float(np.mean([r.sad_mean for r in rs])),
            "aad_mean": float(np.mean([r.aad_mean for r in rs])),
            "iterations": float(np.mean([r.iterations for r in rs])),
            "wall_seconds": float(np.mean([r.wall_seconds for r in rs])),
        })
    return out


def write_aggregate_csv(agg: Sequence[dict], path) -> None:
    keys = ("snr_db", "method", "runs", "sad_mean", "aad_mean", "iterations", "wall_seconds")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for a in agg:
            w.writerow([a[k] if isinstance(a[k], (str, int)) else repr(a[k]) for k in keys])
