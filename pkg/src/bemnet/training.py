"""Mini-batch Adam training with early stopping and best-of-seeds selection."""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .bem import CauchyData
from .config import TrainConfig
from .constants import IMPROVEMENT_THRESHOLD, KERNEL_PRIOR_FREE_SPACE
from .errors import AllRunsFailed, NonFiniteLoss, ShapeMismatch, TooFewSensors
from .geometry import BoundaryMesh, PointSet
from .model import GreensNetModel, init_model, loss, loss_gradients, predict
from .nn import AdamState, adam_step

logger = logging.getLogger(__name__)

STOP_PATIENCE = 'patience'
STOP_MAX_EPOCHS = 'max-epochs'


@dataclass(frozen=True, eq=False)
class TrainingData:
    """Boundary Cauchy data (real parts) plus sensor readings at one wavenumber."""
    mesh: BoundaryMesh
    boundary: CauchyData
    sensors: PointSet
    wavenumber: Optional[float] = None

    def __post_init__(self):
        if len(self.boundary) != len(self.mesh):
            raise ShapeMismatch('%d boundary rows for %d elements'
                                % (len(self.boundary), len(self.mesh)))
        if self.sensors.values is None:
            raise ShapeMismatch('sensor readings are required for training')
        if self.wavenumber is not None and not self.wavenumber >= 0.0:
            raise ValueError('wavenumber must be >= 0, got %r' % self.wavenumber)


@dataclass
class TrainingRecord:
    seed: int
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float('inf')
    stop_reason: str = STOP_MAX_EPOCHS
    wall_time: float = 0.0

    @property
    def epochs(self):
        return len(self.val_loss)

    @property
    def best_train_loss(self):
        return min(self.train_loss) if self.train_loss else float('inf')


class MultiSeedResult(NamedTuple):
    model: GreensNetModel             # the selected model
    models: List[GreensNetModel]      # one per record
    records: List[TrainingRecord]
    selected: int                     # index into records
    failures: List[Tuple[int, str]]   # (seed, reason) for aborted runs


def _split_indices(n, fraction, seed):
    if n < 2:
        raise TooFewSensors('need at least 2 sensor points to split, got %d' % n)
    # nearest integer, halves rounded up
    n_val = max(1, int(math.floor(n * fraction + 0.5)))
    if n_val >= n:
        raise TooFewSensors('validation fraction %g leaves no training points out of %d'
                            % (fraction, n))
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def split_train_validation(sensors: PointSet, fraction, seed) -> Tuple[PointSet, PointSet]:
    """Seeded disjoint split of the sensor points; at least one validation point."""
    train, val = _split_indices(len(sensors), fraction, seed)
    return sensors.subset(train), sensors.subset(val)


def _require_finite(value, seed, epoch, what):
    if not np.isfinite(value):
        raise NonFiniteLoss('seed %d: %s loss became %r at epoch %d' % (seed, what, value, epoch))


def train_one(seed, data: TrainingData, config: TrainConfig, init='glorot'):
    """Train one seeded model; returns the minimum-validation-loss checkpoint and its record."""
    start_time = time.perf_counter()
    wavenumber = None
    if config.kernel_prior == KERNEL_PRIOR_FREE_SPACE:
        if data.wavenumber is None:
            raise ShapeMismatch('the free-space kernel prior needs the dataset wavenumber')
        wavenumber = data.wavenumber
    model = init_model(data.mesh.domain, config.hidden_width, config.depth, seed,
                       config.output_activation, init, wavenumber)
    inputs = model.inputs(data.mesh, data.boundary, data.sensors)
    targets = np.asarray(data.sensors.values, dtype=float)
    train_idx, val_idx = _split_indices(len(data.sensors), config.validation_fraction,
                                        config.split_seed)
    val_inputs, val_targets = inputs.rows(val_idx), targets[val_idx]

    params = model.parameters()
    state = AdamState.create(params, config.learning_rate)
    rng = np.random.default_rng([seed, 2])
    record = TrainingRecord(seed)
    best_model = model

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(train_idx)
        batch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            result = loss_gradients(model, inputs.rows(batch), targets[batch], config.loss)
            _require_finite(result.loss, seed, epoch, 'training')
            params, state = adam_step(params, result.flat, state)
            model = model.with_parameters(params)
            batch_losses.append(result.loss)

        val = loss(predict(model, val_inputs), val_targets, config.loss)
        _require_finite(val, seed, epoch, 'validation')
        record.train_loss.append(float(np.mean(batch_losses)))
        record.val_loss.append(val)

        if val < record.best_val_loss - IMPROVEMENT_THRESHOLD:
            record.best_val_loss = val
            record.best_epoch = epoch
            best_model = model
        elif epoch - record.best_epoch >= config.patience:
            record.stop_reason = STOP_PATIENCE
            break
        if epoch % 500 == 0:
            logger.info('seed %d epoch %d: train %.4e, val %.4e (best %.4e @ %d)',
                        seed, epoch, record.train_loss[-1], val,
                        record.best_val_loss, record.best_epoch)

    record.wall_time = time.perf_counter() - start_time
    logger.info('seed %d stopped (%s) after %d epochs in %.1f s; best val %.4e at epoch %d',
                seed, record.stop_reason, record.epochs, record.wall_time, record.best_val_loss,
                record.best_epoch)
    return best_model, record


def _run_seed(args):
    seed, data, config = args
    try:
        model, record = train_one(seed, data, config)
    except NonFiniteLoss as e:
        return seed, None, None, str(e)
    return seed, model, record, None


def train_multi_seed(data: TrainingData, config: TrainConfig) -> MultiSeedResult:
    """train_one per seed; keep the lowest best-validation loss, ties to the lowest seed."""
    jobs = [(seed, data, config) for seed in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, len(jobs))) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(job) for job in jobs]

    models, records, failures = [], [], []
    for seed, model, record, error in results:
        if error is not None:
            logger.warning('seed %d aborted: %s', seed, error)
            failures.append((seed, error))
            continue
        models.append(model)
        records.append(record)
    if not records:
        raise AllRunsFailed('all %d training runs aborted' % len(jobs))

    selected = select_record(records)
    logger.info('selected seed %d (best val %.4e)', records[selected].seed,
                records[selected].best_val_loss)
    return MultiSeedResult(models[selected], models, records, selected, failures)


def select_record(records: List[TrainingRecord]) -> Optional[int]:
    """Selection rule of train_multi_seed applied to stored records."""
    if not records:
        return None
    return min(range(len(records)), key=lambda i: (records[i].best_val_loss, records[i].seed, i))
