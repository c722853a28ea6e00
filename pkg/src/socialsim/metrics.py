"""Fidelity metrics for comparing simulated and reference engagement."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import AllComponentsSkipped, EmptyInput, HorizonMismatch, LengthMismatch, TooFewRuns
from .model import EngagementVector

HIGH_FIDELITY_MAX = 0.15
MODERATE_MAX = 0.35


class W1Band(str, Enum):
    HIGH_FIDELITY = "HighFidelity"
    MODERATE = "Moderate"
    MISMATCH = "Mismatch"


def w1_band(value: float) -> W1Band:
    if value < HIGH_FIDELITY_MAX:
        return W1Band.HIGH_FIDELITY
    if value <= MODERATE_MAX:
        return W1Band.MODERATE
    return W1Band.MISMATCH


def wasserstein1(samples_a: Sequence[float], samples_b: Sequence[float]) -> float:
    """Earth mover's distance between two empirical distributions on the line.

    Integrates |F_a - F_b| over the merged support. For equal sizes this is
    the mean absolute difference of the sorted samples.
    """
    a = np.sort(np.asarray(samples_a, dtype=float))
    b = np.sort(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptyInput("wasserstein1 needs non-empty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    grid = np.concatenate([a, b])
    grid.sort(kind="mergesort")
    widths = np.diff(grid)
    cdf_a = np.searchsorted(a, grid[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, grid[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * widths))


@dataclass(frozen=True)
class MapeResult:
    percent: float
    used: int
    skipped: int


def mape_details(predicted: Sequence[EngagementVector], actual: Sequence[EngagementVector]) -> MapeResult:
    if len(predicted) != len(actual):
        raise LengthMismatch(f"{len(predicted)} predicted vs {len(actual)} actual steps")
    terms, skipped = [], 0
    for p, a in zip(predicted, actual):
        for pv, av in zip(p.as_tuple(), a.as_tuple()):
            if av <= 0:
                skipped += 1
                continue
            terms.append(abs(pv - av) / av)
    if not terms:
        raise AllComponentsSkipped("every actual component is zero")
    return MapeResult(100.0 * math.fsum(terms) / len(terms), len(terms), skipped)


def mape(predicted: Sequence[EngagementVector], actual: Sequence[EngagementVector]) -> float:
    """Mean absolute percentage error over all steps and all four components."""
    return mape_details(predicted, actual).percent


def dtw(a: Sequence[float], b: Sequence[float]) -> float:
    """Dynamic time warping cost with |a_i - b_j| local cost, no window."""
    if len(a) == 0 or len(b) == 0:
        raise EmptyInput("dtw needs non-empty series")
    b = [float(v) for v in b]
    inf = math.inf
    prev = [inf] * (len(b) + 1)
    prev[0] = 0.0
    for ai in a:
        ai = float(ai)
        cur = [inf] * (len(b) + 1)
        for j, bj in enumerate(b, start=1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = abs(ai - bj) + best
        prev = cur
    return prev[-1]


def zscore_reproducibility(run_metrics: Sequence[float]) -> float:
    """Largest |z| of the per-run metric under the population standard deviation."""
    x = np.asarray(run_metrics, dtype=float)
    if x.size < 2:
        raise TooFewRuns("need at least two runs")
    sigma = float(np.std(x))
    if sigma == 0.0:
        return 0.0
    return float(np.max(np.abs(x - x.mean())) / sigma)


def minmax_normalize(values: Sequence[float], lo: float, hi: float) -> list[float]:
    if hi <= lo:
        return [0.0 for _ in values]
    return [(v - lo) / (hi - lo) for v in values]


@dataclass(frozen=True)
class MetricReport:
    w1: float
    w1_band: W1Band
    mape_percent: float
    dtw: float
    zscore_max_abs: float | None = None
    mape_skipped: int = 0
    run_dtw: tuple[float, ...] = field(default=())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["w1_band"] = self.w1_band.value
        d["run_dtw"] = list(self.run_dtw)
        if self.zscore_max_abs is None:
            del d["zscore_max_abs"]
            del d["run_dtw"]
        return d


def _pooled(traj: Sequence[EngagementVector]) -> list[float]:
    return [v for y in traj for v in y.as_tuple()]


def evaluate(simulated, reference, repeats=None) -> MetricReport:
    """Compare engagement of ``simulated`` with ``reference``.

    Both arguments may be engine trajectories or plain sequences of
    engagement vectors. W1 uses both trajectories' pooled values scaled by
    their joint min and max; MAPE and DTW use raw values. With ``repeats``
    the z-score is computed over the per-run view DTW of ``simulated`` and
    each repeat against the reference.
    """
    sim = list(getattr(simulated, "engagement", simulated))
    ref = list(getattr(reference, "engagement", reference))
    if len(sim) != len(ref):
        raise HorizonMismatch(f"horizons differ: {len(sim)} vs {len(ref)}")
    if not sim:
        raise EmptyInput("empty trajectories")
    ps, pr = _pooled(sim), _pooled(ref)
    lo, hi = min(ps + pr), max(ps + pr)
    w1 = wasserstein1(minmax_normalize(ps, lo, hi), minmax_normalize(pr, lo, hi))
    try:
        md = mape_details(sim, ref)
        mp, skipped = md.percent, md.skipped
    except AllComponentsSkipped:
        # all-zero reference: only exact agreement has a finite answer
        if ps != pr:
            raise
        mp, skipped = 0.0, 4 * len(ref)
    ref_views = [y.views for y in ref]
    d = dtw([y.views for y in sim], ref_views)
    z, runs = None, ()
    if repeats:
        runs = [d]
        for r in repeats:
            rv = list(getattr(r, "engagement", r))
            if len(rv) != len(ref):
                raise HorizonMismatch(f"repeat horizon {len(rv)} vs {len(ref)}")
            runs.append(dtw([y.views for y in rv], ref_views))
        z = zscore_reproducibility(runs)
        runs = tuple(runs)
    return MetricReport(w1, w1_band(w1), mp, d, z, skipped, runs)
