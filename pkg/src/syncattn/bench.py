"""Benchmark machinery: timing, allocation-counting, and report records.

Timing and memory are measured in separate runs because tracemalloc (the
allocation-counting hook) slows the traced code down.  Peak transient
bytes are allocator-observed: the high-water mark of Python-visible
allocations during the call, minus what was already live before it.
Input tensors and the naive path's permission matrix are generated before
any measurement starts.
"""

from __future__ import annotations

import time
import tracemalloc
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import TokenLayout, precision_name, seeded_random_tensor
from .kernel import TileConfig
from .reference import naive_attention
from .topology import InjectionConfig, build_mask, masked3d_forward

__all__ = ["BenchRecord", "measure_peak_bytes", "run_case", "sweep_layouts", "time_repeats"]

IMPLS = ("naive", "decomposed")


@dataclass
class BenchRecord:
    """One benchmark or validation run of one implementation on one layout."""

    impl: str
    frames: int
    video_per_frame: int
    audio_per_frame: int
    others_len: int
    batch: int
    heads: int
    head_dim: int
    precision: str
    seed: int
    q_block: int
    k_block: int
    repeats: int
    total_len: int
    wall_ms_median: float | None = None
    wall_ms_p10: float | None = None
    wall_ms_p90: float | None = None
    peak_bytes: int | None = None
    max_abs_diff: float | None = None
    status: str = "ok"

    def to_dict(self, drop_none: bool = True) -> dict:
        d = asdict(self)
        if drop_none:
            d = {k: v for k, v in d.items() if v is not None}
        return d


@dataclass
class BenchCase:
    layout: TokenLayout
    batch: int = 1
    heads: int = 8
    head_dim: int = 64
    precision: type = np.float32
    seed: int = 0
    tile: TileConfig = field(default_factory=TileConfig)
    repeats: int = 3


def time_repeats(fn, repeats: int) -> tuple[float, float, float]:
    """Median, p10, p90 wall-clock milliseconds over ``repeats`` calls."""
    if repeats < 3:
        raise ValueError(f"repeats must be >= 3 for a reported timing, got {repeats}")
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    p10, p50, p90 = np.percentile(samples, [10, 50, 90])
    return float(p50), float(p10), float(p90)


def measure_peak_bytes(fn):
    """Run ``fn`` under tracemalloc; returns (result, peak transient bytes)."""
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    baseline, _ = tracemalloc.get_traced_memory()
    tracemalloc.reset_peak()
    try:
        result = fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        if not was_tracing:
            tracemalloc.stop()
    return result, max(peak - baseline, 0)


def _make_inputs(case: BenchCase):
    dims = (case.batch, case.heads, case.layout.total_len, case.head_dim)
    q = seeded_random_tensor(dims, case.seed, case.precision)
    k = seeded_random_tensor(dims, case.seed + 1, case.precision)
    v = seeded_random_tensor(dims, case.seed + 2, case.precision)
    return q, k, v


def _record_base(case: BenchCase, impl: str) -> BenchRecord:
    return BenchRecord(
        impl=impl,
        frames=case.layout.frames,
        video_per_frame=case.layout.video_per_frame,
        audio_per_frame=case.layout.audio_per_frame,
        others_len=case.layout.others_len,
        batch=case.batch,
        heads=case.heads,
        head_dim=case.head_dim,
        precision=precision_name(case.precision),
        seed=case.seed,
        q_block=case.tile.q_block,
        k_block=case.tile.k_block,
        repeats=case.repeats,
        total_len=case.layout.total_len,
    )


def run_case(case: BenchCase, impl: str, validate: bool = False, measure: bool = True) -> BenchRecord:
    """Benchmark one implementation on one case.

    ``impl`` is "naive" (materialized permission matrix through the
    reference path) or "decomposed" (streaming decomposition).  An
    out-of-memory failure on the naive path is reported as a record with
    status "naive-oom" rather than raised.
    """
    if impl not in IMPLS:
        raise ValueError(f"impl must be one of {IMPLS}, got {impl!r}")
    record = _record_base(case, impl)
    q, k, v = _make_inputs(case)

    if impl == "naive":
        mask = build_mask(case.layout, InjectionConfig.MASKED_3D)
        run = lambda: naive_attention(q, k, v, mask).out
    else:
        run = lambda: masked3d_forward(q, k, v, case.layout, case.tile)

    try:
        if measure:
            record.wall_ms_median, record.wall_ms_p10, record.wall_ms_p90 = time_repeats(
                run, case.repeats
            )
        out, record.peak_bytes = measure_peak_bytes(run)
    except MemoryError:
        if impl == "naive":
            record.status = "naive-oom"
            return record
        raise

    if validate:
        oracle = naive_attention(q, k, v, build_mask(case.layout, InjectionConfig.MASKED_3D))
        record.max_abs_diff = float(np.max(np.abs(out - oracle.out))) if out.size else 0.0
    return record


def sweep_layouts(base: TokenLayout, doublings: int = 2) -> list[TokenLayout]:
    """Layouts whose total length doubles at each step (frames and others scale)."""
    layouts = [base]
    for i in range(1, doublings + 1):
        layouts.append(
            TokenLayout(
                frames=base.frames * 2**i,
                video_per_frame=base.video_per_frame,
                audio_per_frame=base.audio_per_frame,
                others_len=base.others_len * 2**i,
            )
        )
    return layouts
