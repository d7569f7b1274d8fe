"""Inference cost comparison: implicit kernel network versus explicit maps.

The implicit network scores a sample through the dual form, one pair kernel
evaluation per support vector, so its per-sample cost grows with the
support (training) set.  The explicit-map model only ever touches its fixed
anchors.  Times here cover full classification of single samples, first-layer
kernel evaluation included on the map side.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .builder import AnchorSet, DEFAULT_CLIP_RATIO, build_dmn
from .dkn import DknArchitecture, dkn_classify
from .errors import ConfigError
from .model import ClassifierHead, classify

# A row is flagged when the clock cannot resolve 1% of the measured mean.
_RESOLUTION_FRACTION = 0.01


@dataclass
class BenchRow:
    framework: str  # "dkn" or "dmn"
    support_size: int
    mean_seconds: float
    std_seconds: float
    median_seconds: float
    repetitions: int
    unreliable: bool = False


@dataclass
class BenchReport:
    rows: list
    anchor_count: int
    num_classes: int
    parallelism: int = 1
    notes: str = ("dmn timings include first-layer kernel evaluation against "
                  "the anchors")
    timer_resolution: float = field(
        default_factory=lambda: time.get_clock_info("perf_counter").resolution
    )

    def __post_init__(self):
        for row in self.rows:
            if row.repetitions < 5:
                raise ConfigError("benchmark rows need at least 5 repetitions")
            if not row.mean_seconds > 0:
                raise ConfigError("benchmark times must be positive")

    def to_tsv(self) -> str:
        lines = [f"# anchors={self.anchor_count} classes={self.num_classes} "
                 f"parallelism={self.parallelism}",
                 f"# {self.notes}",
                 "framework\tsupport_size\tmean_s\tstd_s\tmedian_s\treps\tunreliable"]
        for r in self.rows:
            lines.append(
                f"{r.framework}\t{r.support_size}\t{r.mean_seconds:.9f}\t"
                f"{r.std_seconds:.9f}\t{r.median_seconds:.9f}\t{r.repetitions}\t"
                f"{int(r.unreliable)}"
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "anchor_count": self.anchor_count,
            "num_classes": self.num_classes,
            "parallelism": self.parallelism,
            "notes": self.notes,
            "timer_resolution": self.timer_resolution,
            "rows": [
                {
                    "framework": r.framework,
                    "support_size": r.support_size,
                    "mean_seconds": r.mean_seconds,
                    "std_seconds": r.std_seconds,
                    "median_seconds": r.median_seconds,
                    "repetitions": r.repetitions,
                    "unreliable": r.unreliable,
                }
                for r in self.rows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    def mean_of(self, framework: str, size: int) -> float:
        for r in self.rows:
            if r.framework == framework and r.support_size == size:
                return r.mean_seconds
        raise KeyError((framework, size))


def _row(framework, size, times, resolution) -> BenchRow:
    times = np.asarray(times, dtype=np.float64)
    mean = float(np.mean(times))
    return BenchRow(
        framework=framework,
        support_size=int(size),
        mean_seconds=mean,
        std_seconds=float(np.std(times)),
        median_seconds=float(np.median(times)),
        repetitions=times.size,
        unreliable=bool(resolution > _RESOLUTION_FRACTION * mean),
    )


def run_bench(arch: DknArchitecture, anchors: AnchorSet, sizes=(500, 1000, 2000, 5000),
              reps: int = 5, num_classes: int = 5, seed: int = 0,
              clip_ratio: float = DEFAULT_CLIP_RATIO, n_jobs: int = 1) -> BenchReport:
    """Time per-sample classification for both frameworks at several support sizes.

    Query and support samples are drawn uniformly inside the anchor bounding
    box, so any kernel accepting the anchors accepts them too.  Each (size,
    framework) pair gets one warm-up call that is not measured.
    """
    sizes = [int(s) for s in sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise ConfigError("support sizes must be positive")
    if int(reps) != reps or reps < 5:
        raise ConfigError("at least 5 repetitions are required")
    reps = int(reps)
    rng = np.random.default_rng(seed)
    d = anchors.samples.shape[1]
    low = anchors.samples.min(axis=0)
    high = anchors.samples.max(axis=0)
    span = np.where(high > low, high - low, 1.0)

    def draw(count):
        return low + span * rng.random((count, d))

    model = build_dmn(arch, anchors, clip_ratio=clip_ratio, n_jobs=n_jobs)
    head = ClassifierHead.random(num_classes, model.final_width,
                                 trade_off=1.0, seed=seed)
    resolution = time.get_clock_info("perf_counter").resolution
    queries = draw(reps)
    rows = []
    for size in sizes:
        support = draw(size)
        dual = rng.standard_normal((num_classes, size))
        bias = np.zeros(num_classes)
        dkn_classify(arch, support, dual, bias, draw(1)[0])
        times = []
        for r in range(reps):
            t0 = time.perf_counter()
            dkn_classify(arch, support, dual, bias, queries[r])
            times.append(time.perf_counter() - t0)
        rows.append(_row("dkn", size, times, resolution))
    for size in sizes:
        classify(model, head, draw(1)[0])
        times = []
        for r in range(reps):
            t0 = time.perf_counter()
            classify(model, head, queries[r])
            times.append(time.perf_counter() - t0)
        rows.append(_row("dmn", size, times, resolution))
    return BenchReport(rows=rows, anchor_count=anchors.count,
                       num_classes=num_classes, parallelism=max(1, int(n_jobs)))
