"""Overlap and boundary metrics per iteration, plus interaction-normalised summaries.

All metrics are computed on binary masks in the original image grid.
The boundary metric (normalised surface Dice) counts surface voxels of
each mask within a physical tolerance of the other mask's surface,
using 6-neighbourhood surface extraction and Euclidean distances in mm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyInput, InsufficientSeries, ShapeMismatch
from .volume import LabelMask

_SIX = ndimage.generate_binary_structure(3, 1)


def _as_bool(m) -> np.ndarray:
    if isinstance(m, LabelMask):
        return m.binary()
    return np.asarray(m).astype(bool)


@dataclass
class MetricSeries:
    """Per-iteration dice and nsd values, index 0 = initialisation."""

    dice: np.ndarray
    nsd: np.ndarray

    def __post_init__(self):
        self.dice = np.asarray(self.dice, dtype=np.float64)
        self.nsd = np.asarray(self.nsd, dtype=np.float64)
        if self.dice.shape != self.nsd.shape or self.dice.ndim != 1:
            raise ShapeMismatch(f"dice/nsd series differ: {self.dice.shape} vs {self.nsd.shape}")
        for name, arr in (("dice", self.dice), ("nsd", self.nsd)):
            if arr.size and (arr.min() < 0 or arr.max() > 1):
                raise ValueError(f"{name} series outside [0, 1]")

    def __eq__(self, other):
        if not isinstance(other, MetricSeries):
            return NotImplemented
        return np.array_equal(self.dice, other.dice) and np.array_equal(self.nsd, other.nsd)

    @property
    def budget(self) -> int:
        """Editing budget N; the series holds N+1 entries."""
        return len(self.dice) - 1


@dataclass
class SummaryRow:
    """Dataset-level summary for one (algorithm, task) pair."""

    dice_init: float
    dice_final: float
    dice_nauc: float
    nsd_init: float
    nsd_final: float
    nsd_nauc: float
    nnoi: float
    nof_pct: float


@dataclass
class ConvergenceTarget:
    """Per-task Dice level that counts as converged."""

    task_id: str
    target_dice: float
    source: str = "configured"  # or "computed-from-baseline"

    def __post_init__(self):
        if not 0 <= self.target_dice <= 1:
            raise ValueError(f"target_dice must be in [0, 1], got {self.target_dice}")
        if self.source not in ("configured", "computed-from-baseline"):
            raise ValueError(f"unknown target source {self.source!r}")

    @classmethod
    def from_baseline(cls, task_id: str, baseline_dices) -> "ConvergenceTarget":
        """Lower-quartile Dice of a strong automated baseline."""
        return cls(task_id, quantile(baseline_dices, 0.25), "computed-from-baseline")


def dice(pred, ref, empty_value: float = 1.0) -> float:
    """Overlap coefficient 2|P∩R| / (|P|+|R|); both-empty returns ``empty_value``."""
    p, r = _as_bool(pred), _as_bool(ref)
    if p.shape != r.shape:
        raise ShapeMismatch(f"pred {p.shape} vs ref {r.shape}")
    denom = int(p.sum()) + int(r.sum())
    if denom == 0:
        return empty_value
    return 2.0 * int((p & r).sum()) / denom


def _surface_mask(m: np.ndarray) -> np.ndarray:
    # A foreground voxel is surface iff a 6-neighbour is background or
    # lies outside the grid (border_value=0 erodes grid-edge voxels).
    if not m.any():
        return np.zeros_like(m, dtype=bool)
    return m & ~ndimage.binary_erosion(m, structure=_SIX, border_value=0)


def surface_extract(m) -> np.ndarray:
    """Surface voxels of a binary mask as an (n, 3) array of indices."""
    return np.argwhere(_surface_mask(_as_bool(m)))


def nsd(pred, ref, spacing, tau: float, empty_value: float = 1.0) -> float:
    """Normalised surface Dice at physical tolerance ``tau`` (mm).

    Fraction of surface voxels of each mask lying within ``tau`` of the
    other mask's surface, distances Euclidean in mm under ``spacing``.
    Both surfaces empty -> ``empty_value``; exactly one empty -> 0.0.
    """
    if tau < 0:
        raise ValueError(f"tolerance must be >= 0, got {tau}")
    p, r = _as_bool(pred), _as_bool(ref)
    if p.shape != r.shape:
        raise ShapeMismatch(f"pred {p.shape} vs ref {r.shape}")
    surf_p, surf_r = _surface_mask(p), _surface_mask(r)
    n_p, n_r = int(surf_p.sum()), int(surf_r.sum())
    if n_p == 0 and n_r == 0:
        return empty_value
    if n_p == 0 or n_r == 0:
        return 0.0
    dist_to_r = ndimage.distance_transform_edt(~surf_r, sampling=spacing)
    dist_to_p = ndimage.distance_transform_edt(~surf_p, sampling=spacing)
    near_p = int((dist_to_r[surf_p] <= tau).sum())
    near_r = int((dist_to_p[surf_r] <= tau).sum())
    return (near_p + near_r) / (n_p + n_r)


def nauc(series) -> float:
    """Trapezoidal area under a per-iteration series, normalised by the budget.

    Includes the initialisation point (index 0); a constant series at v
    yields exactly v.
    """
    s = np.asarray(series, dtype=np.float64)
    if s.ndim != 1 or len(s) < 2:
        raise InsufficientSeries(f"need at least 2 points, got shape {s.shape}")
    if s.min() < 0 or s.max() > 1:
        raise ValueError("series values must lie in [0, 1]")
    n = len(s) - 1
    return (math.fsum(s) - (s[0] + s[-1]) / 2.0) / n


def noi(dice_series, target: float, budget: int = None) -> int:
    """Number of interactions until the Dice series first reaches ``target``.

    Returns the budget N as a failure sentinel when the target is never
    reached within the series.
    """
    s = np.asarray(dice_series, dtype=np.float64)
    n = len(s) - 1 if budget is None else budget
    hits = np.nonzero(s >= target)[0]
    return int(hits[0]) if hits.size else n


def quantile(values, q: float) -> float:
    """Linear-interpolation quantile of the sorted values."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise EmptyInput("quantile of empty values")
    if not 0 <= q <= 1:
        raise ValueError(f"q must be in [0, 1], got {q}")
    return float(np.quantile(v, q))


def summarize(per_sample: list[MetricSeries], target: ConvergenceTarget, budget: int = None) -> SummaryRow:
    """Dataset-level medians plus convergence statistics.

    Everything but NoF is a median over samples; NoF is the percentage
    of samples whose Dice never reaches the target. Samples that never
    converge contribute the sentinel NoI = N, which pins nNoI at 1.0
    whenever at least half the samples fail.
    """
    if not per_sample:
        raise EmptyInput("summarize needs at least one sample series")
    n = per_sample[0].budget if budget is None else budget
    for s in per_sample:
        if s.budget != n:
            raise ShapeMismatch(f"series budgets differ: {s.budget} vs {n}")
    dice0 = [s.dice[0] for s in per_sample]
    diceN = [s.dice[n] for s in per_sample]
    nsd0 = [s.nsd[0] for s in per_sample]
    nsdN = [s.nsd[n] for s in per_sample]
    nois = [noi(s.dice, target.target_dice, n) for s in per_sample]
    failures = [not np.any(s.dice >= target.target_dice) for s in per_sample]
    return SummaryRow(
        dice_init=float(np.median(dice0)),
        dice_final=float(np.median(diceN)),
        dice_nauc=float(np.median([nauc(s.dice) for s in per_sample])),
        nsd_init=float(np.median(nsd0)),
        nsd_final=float(np.median(nsdN)),
        nsd_nauc=float(np.median([nauc(s.nsd) for s in per_sample])),
        nnoi=float(np.median(nois)) / n,
        nof_pct=100.0 * sum(failures) / len(per_sample),
    )


def median_curve(per_sample: list[MetricSeries]) -> MetricSeries:
    """Per-iteration median across samples, for dice and nsd."""
    if not per_sample:
        raise EmptyInput("median_curve needs at least one sample series")
    lengths = {len(s.dice) for s in per_sample}
    if len(lengths) != 1:
        raise ShapeMismatch(f"series lengths differ: {sorted(lengths)}")
    return MetricSeries(
        dice=np.median([s.dice for s in per_sample], axis=0),
        nsd=np.median([s.nsd for s in per_sample], axis=0),
    )
