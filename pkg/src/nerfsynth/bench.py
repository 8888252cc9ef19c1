"""Speed comparison of the two-phase method against the concatenated baseline.

Each timed run is the whole synthesis pipeline for one output size: load
the exemplar bundle, flatten it, cut the patch set, build indices and fill
the canvas.  Runs for a (size, method) cell are repeated and the minimum is
kept, which is the usual way to suppress scheduler noise.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

from .columns import flatten
from .io import load_field
from .synthesis import PatchSynthesizer

__all__ = ["BenchRow", "time_pipeline", "run_bench", "format_table", "DEFAULT_SIZES"]

DEFAULT_SIZES = (100, 200, 300, 400)


@dataclass
class BenchRow:
    size: int
    baseline_s: float
    two_phase_s: float

    @property
    def ratio(self):
        return self.baseline_s / self.two_phase_s if self.two_phase_s > 0 else float("inf")


def time_pipeline(bundle, size, mode, seed=0, **synth_kwargs):
    t0 = time.perf_counter()
    exemplar = flatten(load_field(bundle))
    est = PatchSynthesizer(mode=mode, random_state=seed, **synth_kwargs)
    est.fit(exemplar).synthesize(size)
    return time.perf_counter() - t0


def run_bench(bundle, sizes=DEFAULT_SIZES, repeats=1, seed=0, progress=None, **synth_kwargs):
    rows = []
    for size in sizes:
        best = {}
        for mode in ("baseline", "two_phase"):
            best[mode] = min(time_pipeline(bundle, size, mode, seed, **synth_kwargs)
                             for _ in range(max(1, repeats)))
            if progress is not None:
                progress(f"{size}^2 {mode}: {best[mode]:.2f}s")
        rows.append(BenchRow(int(size), best["baseline"], best["two_phase"]))
    return rows


def format_table(rows):
    lines = ["size baseline_s two_phase_s ratio"]
    for r in rows:
        lines.append(f"{r.size}^2 {r.baseline_s:.3f} {r.two_phase_s:.3f} {r.ratio:.2f}")
    return "\n".join(lines)
