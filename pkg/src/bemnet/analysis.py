"""Post-processing: reconstruction error reports, Nyquist check, error-bound fit."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import nnls

from .constants import (
    HIST_BINS, HIST_RANGE, LOSS_PAPER, MONOTONIC_RANGE, QUANTILES,
    REL_ERROR_FLOOR, WITHIN_FRACTION,
)
from .errors import InsufficientData, ShapeMismatch
from .geometry import PointSet, lattice_spacing, mesh_spacing
from .model import loss

logger = logging.getLogger(__name__)

PLANE_AXIS = {'x': 0, 'y': 1, 'z': 2}
CROSS_SECTION_TOLERANCE = 1e-9


# Reconstruction report

def signed_relative_error(predicted, reference, floor=REL_ERROR_FLOOR):
    """(u_hat - u) / |u| where |u| > floor; NaN elsewhere. Returns (error, evaluable)."""
    predicted = np.asarray(predicted, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if predicted.shape != reference.shape:
        raise ShapeMismatch('%d predictions for %d reference values'
                            % (predicted.size, reference.size))
    evaluable = np.abs(reference) > floor
    error = np.full(reference.shape, np.nan)
    error[evaluable] = (predicted[evaluable] - reference[evaluable]) / np.abs(reference[evaluable])
    return error, evaluable


def error_histogram(errors, bins=HIST_BINS, half_range=HIST_RANGE):
    """Binned distribution of signed errors over [-half_range, half_range].

    Values outside the range are counted in the edge bins, so the mass of
    a nonempty histogram sums to one.
    """
    errors = np.asarray(errors, dtype=float)
    errors = errors[np.isfinite(errors)]
    edges = np.linspace(-half_range, half_range, bins + 1)
    counts, _ = np.histogram(np.clip(errors, -half_range, half_range), bins=edges)
    total = counts.sum()
    mass = counts / total if total else np.zeros(bins)
    return edges, counts, mass


def cross_section_mask(points, plane, coordinate, half_spacing):
    """Points within half a lattice spacing of the plane <axis> = coordinate."""
    axis = PLANE_AXIS[plane]
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return np.abs(points[:, axis] - coordinate) <= half_spacing + CROSS_SECTION_TOLERANCE


@dataclass(frozen=True, eq=False)
class ReconstructionReport:
    grid: PointSet              # reference grid; values are u_ref
    predicted: np.ndarray
    rel_error: np.ndarray       # NaN where not evaluable
    evaluable: np.ndarray
    quantiles: Dict[float, float]
    fraction_within: float
    within: float
    test_mse: float
    test_loss: float

    @property
    def n_evaluable(self):
        return int(self.evaluable.sum())

    @property
    def n_excluded(self):
        return len(self.evaluable) - self.n_evaluable

    def histogram(self, bins=HIST_BINS, half_range=HIST_RANGE):
        return error_histogram(self.rel_error[self.evaluable], bins, half_range)

    def cross_section(self, plane, coordinate, half_spacing):
        """Indices of grid points lying on the requested slice."""
        return np.flatnonzero(cross_section_mask(self.grid.points, plane, coordinate,
                                                 half_spacing))

    def summary(self):
        return {
            'points': len(self.grid),
            'evaluable': self.n_evaluable,
            'excluded_below_floor': self.n_excluded,
            'within': self.within,
            'fraction_within': self.fraction_within,
            'quantiles': {'%g' % p: v for p, v in self.quantiles.items()},
            'test_mse': self.test_mse,
            'test_loss': self.test_loss,
        }


def reconstruction_report(grid: PointSet, predicted, floor=REL_ERROR_FLOOR,
                          within=WITHIN_FRACTION, loss_kind=LOSS_PAPER):
    """Compare predictions against the reference values carried by `grid`."""
    if grid.values is None:
        raise ShapeMismatch('reference grid carries no values')
    reference = np.asarray(grid.values, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    error, evaluable = signed_relative_error(predicted, reference, floor)
    valid = error[evaluable]
    if valid.size:
        quantiles = {p: float(v) for p, v in zip(QUANTILES, np.quantile(valid, QUANTILES))}
        fraction = float(np.mean(np.abs(valid) <= within))
        mse = float(np.mean((predicted[evaluable] - reference[evaluable]) ** 2))
    else:
        logger.warning('no grid point has |u| above %g; relative errors undefined', floor)
        quantiles = {p: float('nan') for p in QUANTILES}
        fraction = 0.0
        mse = float('nan')
    if len(valid) < len(reference):
        logger.info('%d grid point(s) below |u| = %g excluded from relative errors',
                    len(reference) - len(valid), floor)
    return ReconstructionReport(
        grid=grid,
        predicted=predicted,
        rel_error=error,
        evaluable=evaluable,
        quantiles=quantiles,
        fraction_within=fraction,
        within=within,
        test_mse=mse,
        test_loss=loss(predicted, reference, loss_kind),
    )


# Sampling-density (Nyquist) check

@dataclass(frozen=True)
class LatticeCheck:
    name: str
    dr: float
    bound: float        # pi / k_max
    k_sampling: float   # 2 pi / dr
    passed: bool


@dataclass(frozen=True)
class NyquistReport:
    k_max: float
    dr_max: float
    bound: float
    k_sampling: float
    passed: bool
    lattices: Tuple[LatticeCheck, ...]


def _check(name, dr, k_max):
    bound = math.pi / k_max if k_max > 0.0 else math.inf
    return LatticeCheck(name, dr, bound, 2.0 * math.pi / dr, dr <= bound)


def lattice_spacings(run) -> Dict[str, float]:
    """Largest spacing of the collocation, sensor and reference-grid lattices."""
    return {
        'collocation': mesh_spacing(run.domain, run.step),
        'sensors': lattice_spacing(run.domain, run.sensor_counts),
        'grid': lattice_spacing(run.domain, run.grid_counts),
    }


def nyquist_check(k_max, spacings: Dict[str, float], lattices: Sequence[str]) -> NyquistReport:
    """Δr_max <= π / k_max over the selected lattices; k_sampling = 2π / Δr_max.

    Every lattice in `spacings` is reported; only `lattices` enter the verdict.
    """
    if k_max < 0.0:
        raise ValueError('k_max must be >= 0')
    checks = tuple(_check(name, dr, k_max) for name, dr in spacings.items())
    dr_max = max(spacings[name] for name in lattices)
    overall = _check('overall', dr_max, k_max)
    return NyquistReport(k_max, dr_max, overall.bound, overall.k_sampling,
                         overall.passed, checks)


# Error-bound fit

@dataclass(frozen=True)
class BoundFit:
    dr: float
    n_points: int
    c1: float
    c2: float
    residual: float


def fit_error_bound(k, dr, eps) -> BoundFit:
    """Non-negative fit of eps(k) = C1 (k dr) + C2 k (k dr)^2 at fixed dr."""
    k = np.asarray(k, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if k.shape != eps.shape:
        raise ShapeMismatch('%d wavenumbers for %d error values' % (k.size, eps.size))
    if len(np.unique(k)) < 3:
        raise InsufficientData('need at least 3 distinct wavenumbers, got %d'
                               % len(np.unique(k)))
    kdr = k * dr
    A = np.column_stack([kdr, k * kdr ** 2])
    (c1, c2), residual = nnls(A, eps)
    return BoundFit(float(dr), len(k), float(c1), float(c2), float(residual))


def _ok_rows(rows):
    good = []
    for row in rows:
        if row['status'] != 'ok' or not np.isfinite(row['test_mse']):
            continue
        good.append(row)
    return good


def _groups(rows):
    groups: Dict[Tuple[int, int], List[dict]] = {}
    for row in _ok_rows(rows):
        groups.setdefault((row['n_sensors'], row['width']), []).append(row)
    return groups


def fit_sweep_table(rows) -> List[Tuple[int, int, BoundFit]]:
    """fit_error_bound per (sensor layout, width) group of successful sweep rows."""
    fits = []
    for (n, width), group in sorted(_groups(rows).items()):
        try:
            fit = fit_error_bound([r['k'] for r in group], group[0]['dr'],
                                  [r['test_mse'] for r in group])
        except InsufficientData as e:
            logger.warning('skipping n_sensors=%d width=%d: %s', n, width, e)
            continue
        fits.append((n, width, fit))
    if not fits:
        raise InsufficientData('no sweep group has 3 distinct wavenumbers with results')
    return fits


# Sweep trend diagnostic

@dataclass(frozen=True)
class TrendStep:
    kind: str           # 'step' or 'endpoints'
    k_lo: float
    k_hi: float
    mse_lo: float
    mse_hi: float

    @property
    def increasing(self):
        return self.mse_hi > self.mse_lo


def monotonicity(k, mse, k_range=MONOTONIC_RANGE) -> List[TrendStep]:
    """Consecutive steps and the endpoint comparison of mse(k) inside k_range."""
    pairs = sorted((float(kk), float(m)) for kk, m in zip(k, mse)
                   if k_range[0] <= kk <= k_range[1] and np.isfinite(m))
    if len(pairs) < 2:
        return []
    steps = [TrendStep('step', a[0], b[0], a[1], b[1]) for a, b in zip(pairs, pairs[1:])]
    steps.append(TrendStep('endpoints', pairs[0][0], pairs[-1][0], pairs[0][1], pairs[-1][1]))
    return steps


def sweep_trends(rows, k_range=MONOTONIC_RANGE):
    """monotonicity() per (sensor layout, width) group; yields (n, width, TrendStep)."""
    out = []
    for (n, width), group in sorted(_groups(rows).items()):
        steps = monotonicity([r['k'] for r in group], [r['test_mse'] for r in group], k_range)
        endpoint: Optional[TrendStep] = steps[-1] if steps else None
        if endpoint is not None and not endpoint.increasing:
            logger.warning('n_sensors=%d width=%d: testing MSE at k=%g does not exceed k=%g',
                           n, width, endpoint.k_hi, endpoint.k_lo)
        out.extend((n, width, step) for step in steps)
    return out
