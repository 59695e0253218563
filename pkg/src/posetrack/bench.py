"""Timing of descriptor extraction: integral-image path vs per-pixel path.

Wall-clock, median of several runs.  Absolute numbers depend on the machine;
the ratio is what carries over.
"""

from __future__ import annotations

import platform
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from .imaging import AnnulusGeometry, build_integral, extract_descriptors, feature_maps, naive_descriptors
from .tracker import window_candidates


@dataclass
class BenchRow:
    window_radius: int
    candidates: int
    rings: int
    integral_s: float  # integral build + extraction, per frame
    extract_s: float  # extraction alone
    naive_s: float
    speedup: float

    def as_dict(self) -> dict:
        return asdict(self)


def median_time(fn, runs: int = 5) -> float:
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def machine_info() -> dict:
    return {
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def bench_window(image: np.ndarray, radius: int, geometry: AnnulusGeometry, runs: int = 5) -> BenchRow:
    h, w = image.shape[:2]
    cand = window_candidates((w // 2, h // 2), radius, (h, w))
    integrals = build_integral(image)
    maps = feature_maps(image)

    def integral_path():
        extract_descriptors(build_integral(image), cand, geometry)

    t_int = median_time(integral_path, runs)
    t_ext = median_time(lambda: extract_descriptors(integrals, cand, geometry), runs)
    t_naive = median_time(lambda: naive_descriptors(maps, cand, geometry), runs)
    return BenchRow(radius, len(cand), geometry.m, t_int, t_ext, t_naive, t_naive / t_int)


def run_bench(width=240, height=240, radii=(5, 10, 15, 20), rings=10, stride=2, runs=5, seed=0) -> list[BenchRow]:
    rng = np.random.default_rng(seed)
    image = rng.random((height, width, 3))
    geom = AnnulusGeometry.square(rings, stride)
    return [bench_window(image, r, geom, runs) for r in radii]
