"""Seeded golden-vector suites for cross-run and cross-implementation checks.

Each suite is a fixed list of named cases; generating a suite writes one
golden file per produced tensor, checking recomputes everything and
compares against the stored files.  float64 cases must match bit for bit
on a given platform; float32 cases are compared at a small absolute
tolerance (F32_TOL) to allow for build-to-build variation in vectorized
math libraries.

Scalar and per-row outputs (LSE vectors, loss values) are stored as
(B, H, S, 1) or (1, 1, 1, 1) tensors so everything shares one format.
Suite cases deliberately avoid all-masked rows: golden files hold finite
values only.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import (
    TokenLayout,
    per_frame_cu_seqlens,
    read_golden,
    seeded_random_tensor,
    write_golden,
)
from .flow import FlowState, euler_sample, fm_loss, interpolate
from .kernel import TileConfig, flash_forward, flash_varlen_forward
from .merge import merge_many
from .reference import naive_attention
from .rope import FreqSchedule, apply_rope, assign_coords
from .topology import masked3d_forward

__all__ = ["F32_TOL", "SUITES", "check_suite", "generate_suite"]

F32_TOL = 1e-6


def _lse4(lse: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(lse[..., None])


def _scalar4(x: float, dtype) -> np.ndarray:
    return np.full((1, 1, 1, 1), x, dtype=dtype)


def _attention_cases(dtype):
    tag = "f64" if dtype == np.float64 else "f32"

    def dense():
        q = seeded_random_tensor((1, 2, 97, 16), 11, dtype)
        k = seeded_random_tensor((1, 2, 203, 16), 12, dtype)
        v = seeded_random_tensor((1, 2, 203, 16), 13, dtype)
        part = flash_forward(q, k, v, TileConfig(32, 48))
        return {"out": part.out, "lse": _lse4(part.lse)}

    def varlen():
        cu_q = per_frame_cu_seqlens(17, 4)
        cu_k = per_frame_cu_seqlens(29, 4)
        q = seeded_random_tensor((2, 1, 68, 8), 21, dtype)
        k = seeded_random_tensor((2, 1, 116, 8), 22, dtype)
        v = seeded_random_tensor((2, 1, 116, 8), 23, dtype)
        part = flash_varlen_forward(q, k, v, cu_q, cu_k)
        return {"out": part.out, "lse": _lse4(part.lse)}

    return [(f"dense_{tag}", dense), (f"varlen_{tag}", varlen)]


def _merge_cases(dtype):
    tag = "f64" if dtype == np.float64 else "f32"

    def three_way():
        q = seeded_random_tensor((1, 2, 31, 8), 31, dtype)
        k = seeded_random_tensor((1, 2, 90, 8), 32, dtype)
        v = seeded_random_tensor((1, 2, 90, 8), 33, dtype)
        parts = [
            naive_attention(q, k[:, :, a:b], v[:, :, a:b])
            for a, b in ((0, 30), (30, 55), (55, 90))
        ]
        merged = merge_many(parts)
        return {"out": merged.out, "lse": _lse4(merged.lse)}

    return [(f"three_way_{tag}", three_way)]


def _rope_cases(dtype):
    tag = "f64" if dtype == np.float64 else "f32"

    def rotated():
        layout = TokenLayout(frames=3, video_per_frame=12, audio_per_frame=4, others_len=6)
        coords = assign_coords(layout, video_grid=(3, 4))
        sched = FreqSchedule.for_head_dim(16)
        x = seeded_random_tensor((1, 2, layout.total_len, 16), 41, dtype)
        return {"out": apply_rope(x, coords, sched)}

    return [(f"rotated_{tag}", rotated)]


def _flow_cases(dtype):
    tag = "f64" if dtype == np.float64 else "f32"

    def path():
        x0 = seeded_random_tensor((1, 1, 24, 8), 51, dtype)
        x1 = seeded_random_tensor((1, 1, 24, 8), 52, dtype)
        mid = interpolate(FlowState(x0, x1, 0.25))
        sampled = euler_sample(lambda x, t: x1 - x0, x0, steps=10)
        loss = fm_loss(mid, x0, x1)
        return {"mid": mid, "sampled": sampled, "loss": _scalar4(loss, dtype)}

    return [(f"path_{tag}", path)]


def _masked3d_cases(dtype):
    tag = "f64" if dtype == np.float64 else "f32"

    def decomposed():
        layout = TokenLayout(frames=4, video_per_frame=10, audio_per_frame=3, others_len=7)
        dims = (1, 2, layout.total_len, 16)
        q = seeded_random_tensor(dims, 61, dtype)
        k = seeded_random_tensor(dims, 62, dtype)
        v = seeded_random_tensor(dims, 63, dtype)
        return {"out": masked3d_forward(q, k, v, layout, TileConfig(16, 16))}

    return [(f"decomposed_{tag}", decomposed)]


SUITES = {
    "attention": lambda: _attention_cases(np.float64) + _attention_cases(np.float32),
    "merge": lambda: _merge_cases(np.float64) + _merge_cases(np.float32),
    "rope": lambda: _rope_cases(np.float64) + _rope_cases(np.float32),
    "flow": lambda: _flow_cases(np.float64) + _flow_cases(np.float32),
    "masked3d": lambda: _masked3d_cases(np.float64) + _masked3d_cases(np.float32),
}


def _suite_cases(suite: str):
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    return SUITES[suite]()


def generate_suite(suite: str, root) -> list[Path]:
    """Compute and write every golden file of a suite; returns the paths."""
    root = Path(root) / suite
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for name, build in _suite_cases(suite):
        for key, tensor in build().items():
            path = root / f"{name}__{key}.gv"
            write_golden(path, tensor)
            written.append(path)
    return written


def check_suite(suite: str, root) -> list[str]:
    """Recompute a suite and compare against stored goldens.

    Returns a list of human-readable failure strings (empty means pass).
    float64 tensors must be bit-identical; float32 tensors must agree
    within F32_TOL.
    """
    root = Path(root) / suite
    failures = []
    for name, build in _suite_cases(suite):
        for key, tensor in build().items():
            path = root / f"{name}__{key}.gv"
            case_id = f"{suite}/{name}__{key}"
            if not path.exists():
                failures.append(f"{case_id}: missing golden file {path}")
                continue
            try:
                stored = read_golden(path)
            except ValueError as exc:
                failures.append(f"{case_id}: unreadable golden file ({exc})")
                continue
            if stored.shape != tensor.shape or stored.dtype != tensor.dtype:
                failures.append(
                    f"{case_id}: stored {stored.dtype}{stored.shape} vs recomputed "
                    f"{tensor.dtype}{tensor.shape}"
                )
                continue
            if tensor.dtype == np.float64:
                if stored.tobytes() != tensor.tobytes():
                    diff = float(np.max(np.abs(stored - tensor)))
                    failures.append(f"{case_id}: float64 mismatch, max abs diff {diff:.3e}")
            else:
                diff = float(np.max(np.abs(stored - tensor)))
                if diff > F32_TOL:
                    failures.append(f"{case_id}: float32 diff {diff:.3e} exceeds {F32_TOL}")
    return failures
