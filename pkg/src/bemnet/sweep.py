"""Sensitivity sweep over wavenumber, sensor layout and hidden width.

Each cell generates its own dataset, trains all seeds, scores the selected
model on the reference grid and writes `cell.json` into its own directory.
The aggregate tables are assembled afterwards by a single writer.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import reduce
from pathlib import Path
from typing import List

from .analysis import reconstruction_report, sweep_trends
from .bem import generate_dataset
from .config import RunConfig, config_echo
from .constants import (
    CELL_RESULT_FILE, DATASET_DIR, MONOTONIC_COLUMNS, MONOTONIC_CSV, SWEEP_COLUMNS, SWEEP_CSV,
)
from .errors import BemnetError, ConfigError, SchemaMismatch
from .geometry import lattice_spacing, layout_counts
from .model import predict_field
from .persistence import (
    read_csv, read_json, save_checkpoint, save_dataset, write_csv, write_json,
)
from .training import TrainingData, train_multi_seed

logger = logging.getLogger(__name__)

STATUS_OK = 'ok'
STATUS_FAILED = 'failed'
CHECKPOINT_FILE = 'checkpoint.json'


@dataclass(frozen=True)
class SweepCell:
    k: float
    n_sensors: int
    width: int

    @property
    def name(self):
        return 'k%g_n%d_w%d' % (self.k, self.n_sensors, self.width)


def base_counts(counts):
    """Smallest lattice with the same aspect as `counts`, e.g. (2, 10, 6) -> (1, 5, 3)."""
    g = reduce(math.gcd, counts)
    return tuple(n // g for n in counts)


def _failed_row(cell, dr, reason):
    nan = float('nan')
    return {'k': cell.k, 'n_sensors': cell.n_sensors, 'width': cell.width, 'dr': dr,
            'status': STATUS_FAILED, 'selected_seed': -1, 'best_train_loss': nan,
            'best_val_loss': nan, 'test_mse': nan, 'test_loss': nan,
            'fraction_within': nan, 'reason': reason}


def _record_failure(cell, cell_dir, dr, reason):
    row = _failed_row(cell, dr, reason)
    cell_dir.mkdir(parents=True, exist_ok=True)
    write_json(cell_dir / CELL_RESULT_FILE, row)
    return row


def run_cell(cell: SweepCell, run: RunConfig, root) -> dict:
    """Generate, train and score one sweep cell. Failures become a 'failed' row."""
    cell_dir = Path(root) / cell.name
    counts = layout_counts(base_counts(run.sensor_counts), cell.n_sensors)
    dr = lattice_spacing(run.domain, counts)
    training = replace(run.training, hidden_width=cell.width, workers=1)
    logger.info('sweep cell %s: sensors %s, dr %g', cell.name, counts, dr)
    try:
        data = generate_dataset(run.domain, run.step, cell.k, run.bc, counts, run.grid_counts)
        result = train_multi_seed(
            TrainingData(data.mesh, data.boundary, data.sensors, cell.k), training)
        predicted = predict_field(result.model, data.mesh, data.boundary, data.grid,
                                  run.report.chunk)
        report = reconstruction_report(data.grid, predicted, run.report.rel_error_floor,
                                       run.report.within, training.loss)
    except BemnetError as e:
        logger.warning('sweep cell %s failed: %s', cell.name, e)
        return _record_failure(cell, cell_dir, dr, str(e))
    except Exception as e:
        # any other error fails this cell only; the sweep goes on
        logger.exception('sweep cell %s crashed', cell.name)
        return _record_failure(cell, cell_dir, dr, '%s: %s' % (type(e).__name__, e))

    record = result.records[result.selected]
    cell_dir.mkdir(parents=True, exist_ok=True)
    echo = config_echo(replace(run, wavenumber=cell.k, sensor_counts=counts, training=training))
    save_dataset(cell_dir / DATASET_DIR, data.mesh, data.boundary, data.sensors, data.grid,
                 {'config': echo, 'wavenumber': cell.k, 'condition': data.boundary.condition})
    save_checkpoint(cell_dir / CHECKPOINT_FILE, result.model,
                    {'seed': record.seed, 'best_epoch': record.best_epoch,
                     'best_val_loss': record.best_val_loss})
    row = {'k': cell.k, 'n_sensors': cell.n_sensors, 'width': cell.width, 'dr': dr,
           'status': STATUS_OK, 'selected_seed': record.seed,
           'best_train_loss': record.best_train_loss, 'best_val_loss': record.best_val_loss,
           'test_mse': report.test_mse, 'test_loss': report.test_loss,
           'fraction_within': report.fraction_within, 'reason': ''}
    write_json(cell_dir / CELL_RESULT_FILE, row)
    return row


def _run_cell_job(args):
    return run_cell(*args)


def completed_row(cell: SweepCell, root):
    """The stored row of a cell that already finished successfully, or None."""
    path = Path(root) / cell.name / CELL_RESULT_FILE
    if not path.exists():
        return None
    try:
        row = read_json(path)
    except SchemaMismatch:
        return None
    same = (row.get('k') == cell.k and row.get('n_sensors') == cell.n_sensors
            and row.get('width') == cell.width)
    return row if same and row.get('status') == STATUS_OK else None


def run_sweep(run: RunConfig, root, resume=False) -> List[dict]:
    """Run every cell of run.sweep; returns one row per cell in grid order."""
    root = Path(root)
    cells = [SweepCell(float(k), int(n), int(w)) for k, n, w in run.sweep.cells()]
    for cell in cells:
        try:
            layout_counts(base_counts(run.sensor_counts), cell.n_sensors)
        except ValueError as e:
            raise ConfigError('[sweep] layouts: %s' % e)

    rows = {}
    if resume:
        for cell in cells:
            row = completed_row(cell, root)
            if row is not None:
                rows[cell] = row
        logger.info('resume: %d of %d cells already complete', len(rows), len(cells))
    pending = [cell for cell in cells if cell not in rows]

    root.mkdir(parents=True, exist_ok=True)
    jobs = [(cell, run, root) for cell in pending]
    if run.sweep.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(run.sweep.workers, len(jobs))) as pool:
            results = list(pool.map(_run_cell_job, jobs))
    else:
        results = [_run_cell_job(job) for job in jobs]
    rows.update(zip(pending, results))

    ordered = [rows[cell] for cell in cells]
    write_sweep_tables(root, ordered)
    failed = sum(row['status'] != STATUS_OK for row in ordered)
    if failed:
        logger.warning('%d of %d sweep cells failed', failed, len(ordered))
    return ordered


def write_sweep_tables(root, rows):
    root = Path(root)
    write_csv(root / SWEEP_CSV, SWEEP_COLUMNS,
              ([row[c] for c in SWEEP_COLUMNS] for row in rows))
    write_csv(root / MONOTONIC_CSV, MONOTONIC_COLUMNS,
              ((n, w, s.kind, s.k_lo, s.k_hi, s.mse_lo, s.mse_hi, int(s.increasing))
               for n, w, s in sweep_trends(rows)))


_SWEEP_PARSERS = (float, int, int, float, str, int, float, float, float, float, float)


def load_sweep_table(path) -> List[dict]:
    return [dict(zip(SWEEP_COLUMNS, values))
            for values in read_csv(path, SWEEP_COLUMNS, _SWEEP_PARSERS)]
