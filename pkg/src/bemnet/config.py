"""Configuration file parsing.

Reads the INI run configuration and converts its sections into
structured dataclasses. Missing sections or keys fall back to the
test-case defaults in constants.py.
"""

import configparser
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Optional, Tuple

from .bem import BCSpec, BoundaryCondition
from .constants import (
    BC_KINDS, DEFAULT_BATCH_SIZE, DEFAULT_BC, DEFAULT_DEPTH, DEFAULT_GRID_COUNTS,
    DEFAULT_HIDDEN_WIDTH, DEFAULT_LEARNING_RATE, DEFAULT_LENGTHS, DEFAULT_MAX_EPOCHS,
    DEFAULT_NYQUIST_LATTICES, DEFAULT_PATIENCE, DEFAULT_PLANE, DEFAULT_PLANE_COORDINATE,
    DEFAULT_SEEDS, DEFAULT_SENSOR_COUNTS, DEFAULT_SPLIT_SEED, DEFAULT_STEP,
    DEFAULT_SWEEP_LAYOUTS, DEFAULT_SWEEP_WAVENUMBERS, DEFAULT_SWEEP_WIDTHS,
    DEFAULT_VALIDATION_FRACTION, DEFAULT_WAVENUMBER, FACES, HIST_BINS, HIST_RANGE,
    KERNEL_PRIOR_FREE_SPACE, KERNEL_PRIORS,
    LOSS_KINDS, LOSS_PAPER, NYQUIST_LATTICES, OUTPUT_ACTIVATIONS, PREDICT_CHUNK,
    REL_ERROR_FLOOR, WITHIN_FRACTION,
)
from .errors import ConfigError
from .geometry import BoxDomain


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer, early-stopping and network-shape settings."""
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    patience: int = DEFAULT_PATIENCE
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    split_seed: int = DEFAULT_SPLIT_SEED
    hidden_width: int = DEFAULT_HIDDEN_WIDTH
    depth: int = DEFAULT_DEPTH
    output_activation: str = 'linear'
    loss: str = LOSS_PAPER
    kernel_prior: str = KERNEL_PRIOR_FREE_SPACE
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError('validation_fraction must lie in (0, 1)')
        if self.batch_size < 1:
            raise ValueError('batch_size must be >= 1')
        if self.max_epochs < 1:
            raise ValueError('max_epochs must be >= 1')
        if not 0 <= self.patience < self.max_epochs:
            raise ValueError('patience must be smaller than max_epochs')
        if self.learning_rate <= 0.0:
            raise ValueError('learning_rate must be positive')
        if not self.seeds:
            raise ValueError('at least one seed is required')
        if self.hidden_width < 1 or self.depth < 1:
            raise ValueError('hidden_width and depth must be >= 1')
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError('output_activation must be one of %s' % (OUTPUT_ACTIVATIONS,))
        if self.loss not in LOSS_KINDS:
            raise ValueError('loss must be one of %s' % (LOSS_KINDS,))
        if self.kernel_prior not in KERNEL_PRIORS:
            raise ValueError('kernel_prior must be one of %s' % (KERNEL_PRIORS,))
        if self.workers < 1:
            raise ValueError('workers must be >= 1')


@dataclass(frozen=True)
class SweepGrid:
    """Cells of the sensitivity study: wavenumber x sensor layout x width."""
    wavenumbers: Tuple[float, ...] = DEFAULT_SWEEP_WAVENUMBERS
    layouts: Tuple[int, ...] = DEFAULT_SWEEP_LAYOUTS
    widths: Tuple[int, ...] = DEFAULT_SWEEP_WIDTHS
    workers: int = 1

    def __post_init__(self):
        if not (self.wavenumbers and self.layouts and self.widths):
            raise ValueError('sweep lists must be nonempty')
        if any(k < 0.0 for k in self.wavenumbers):
            raise ValueError('wavenumbers must be >= 0')
        if any(n < 1 for n in self.layouts) or any(w < 1 for w in self.widths):
            raise ValueError('layouts and widths must be positive')

    def cells(self):
        return [(k, n, w) for k in self.wavenumbers
                for n in self.layouts for w in self.widths]


@dataclass(frozen=True)
class ReportConfig:
    plane: str = DEFAULT_PLANE
    coordinate: float = DEFAULT_PLANE_COORDINATE
    rel_error_floor: float = REL_ERROR_FLOOR
    within: float = WITHIN_FRACTION
    hist_bins: int = HIST_BINS
    hist_range: float = HIST_RANGE
    chunk: int = PREDICT_CHUNK

    def __post_init__(self):
        if self.plane not in ('x', 'y', 'z'):
            raise ValueError("plane must be 'x', 'y' or 'z'")
        if self.hist_bins < 1 or self.hist_range <= 0.0 or self.chunk < 1:
            raise ValueError('histogram bins, range and chunk must be positive')
        if not self.within > 0.0:
            raise ValueError('within must be positive')
        if not self.rel_error_floor >= 0.0:
            raise ValueError('rel_error_floor must be >= 0')


@dataclass(frozen=True)
class NyquistConfig:
    k_max: Optional[float] = None  # None: largest sweep wavenumber
    lattices: Tuple[str, ...] = DEFAULT_NYQUIST_LATTICES

    def __post_init__(self):
        if self.k_max is not None and not self.k_max >= 0.0:
            raise ValueError('k_max must be >= 0')
        unknown = [name for name in self.lattices if name not in NYQUIST_LATTICES]
        if unknown or not self.lattices:
            raise ValueError('lattices must be chosen from %s' % (NYQUIST_LATTICES,))


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, resolved from one configuration file."""
    domain: BoxDomain = field(default_factory=lambda: BoxDomain(DEFAULT_LENGTHS))
    step: float = DEFAULT_STEP
    wavenumber: float = DEFAULT_WAVENUMBER
    bc: BCSpec = field(default_factory=BCSpec.test_case)
    sensor_counts: Tuple[int, int, int] = DEFAULT_SENSOR_COUNTS
    grid_counts: Tuple[int, int, int] = DEFAULT_GRID_COUNTS
    training: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepGrid = field(default_factory=SweepGrid)
    report: ReportConfig = field(default_factory=ReportConfig)
    nyquist: NyquistConfig = field(default_factory=NyquistConfig)


def load_config(path=None):
    """Load and parse a configuration file.

    Returns a ConfigParser instance; an empty one when path is None.
    """
    cfgp = configparser.ConfigParser()
    if path is None:
        return cfgp
    try:
        with open(path) as f:
            cfgp.read_file(f)
    except OSError as e:
        raise ConfigError('%s: cannot read config: %s' % (path, e.strerror))
    except configparser.Error as e:
        raise ConfigError('%s: %s' % (path, e))
    cfgp.source_path = str(path)
    return cfgp


def _key_line(cfgp, section, key):
    """Line number of `key` inside `section` of the file cfgp was read from."""
    path = getattr(cfgp, 'source_path', None)
    if path is None:
        return None
    current = None
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if line.startswith('[') and line.endswith(']'):
                current = line[1:-1].strip()
            elif current == section and '=' in line:
                if line.split('=', 1)[0].strip().lower() == key:
                    return lineno
    return None


def _fail(cfgp, section, key, message):
    path = getattr(cfgp, 'source_path', '<defaults>')
    line = _key_line(cfgp, section, key)
    where = '%s:%s' % (path, line) if line is not None else path
    raise ConfigError('%s: [%s] %s: %s' % (where, section, key, message))


def _get(cfgp, section, key, parse, default):
    if not cfgp.has_option(section, key):
        return default
    raw = cfgp.get(section, key)
    try:
        return parse(raw)
    except (TypeError, ValueError) as e:
        _fail(cfgp, section, key, 'invalid value %r (%s)' % (raw, e))


def _float_list(raw):
    return tuple(float(v) for v in raw.replace(',', ' ').split())


def _int_list(raw):
    return tuple(int(v) for v in raw.replace(',', ' ').split())


def _word_list(raw):
    return tuple(v.strip().lower() for v in raw.replace(',', ' ').split())


def _triple(parse):
    def parse_triple(raw):
        values = parse(raw)
        if len(values) != 3:
            raise ValueError('expected 3 values, got %d' % len(values))
        return values
    return parse_triple


def _build(cfgp, section, factory, **kwargs):
    """Instantiate a config dataclass, anchoring invariant failures to the section."""
    try:
        return factory(**kwargs)
    except ValueError as e:
        key = next((k for k in kwargs if k in str(e)), '')
        _fail(cfgp, section, key, str(e))


def get_domain(cfgp):
    lengths = _get(cfgp, 'domain', 'lengths', _triple(_float_list), DEFAULT_LENGTHS)
    return _build(cfgp, 'domain', BoxDomain, lengths=lengths)


def get_bc(cfgp):
    """Parse the [bc] section: one `<face> = <kind> <value>` entry per face."""
    faces: Dict[str, BoundaryCondition] = {}
    for face in FACES:
        kind, value = DEFAULT_BC[face]
        if cfgp.has_option('bc', face):
            words = cfgp.get('bc', face).split()
            if len(words) != 2 or words[0].lower() not in BC_KINDS:
                _fail(cfgp, 'bc', face, "expected '<dirichlet|neumann> <value>'")
            kind = words[0].lower()
            try:
                value = float(words[1])
            except ValueError:
                _fail(cfgp, 'bc', face, 'invalid value %r' % words[1])
        faces[face] = BoundaryCondition(kind, value)
    if cfgp.has_section('bc'):
        for key in cfgp.options('bc'):
            if key not in FACES:
                _fail(cfgp, 'bc', key, 'unknown face label')
    return BCSpec(faces)


def get_training(cfgp):
    s = 'training'
    return _build(
        cfgp, s, TrainConfig,
        learning_rate=_get(cfgp, s, 'learning_rate', float, DEFAULT_LEARNING_RATE),
        batch_size=_get(cfgp, s, 'batch_size', int, DEFAULT_BATCH_SIZE),
        max_epochs=_get(cfgp, s, 'max_epochs', int, DEFAULT_MAX_EPOCHS),
        patience=_get(cfgp, s, 'patience', int, DEFAULT_PATIENCE),
        validation_fraction=_get(cfgp, s, 'validation_fraction', float,
                                 DEFAULT_VALIDATION_FRACTION),
        seeds=_get(cfgp, s, 'seeds', _int_list, DEFAULT_SEEDS),
        split_seed=_get(cfgp, s, 'split_seed', int, DEFAULT_SPLIT_SEED),
        hidden_width=_get(cfgp, s, 'hidden_width', int, DEFAULT_HIDDEN_WIDTH),
        depth=_get(cfgp, s, 'depth', int, DEFAULT_DEPTH),
        output_activation=_get(cfgp, s, 'output_activation', str.strip, 'linear'),
        loss=_get(cfgp, s, 'loss', str.strip, LOSS_PAPER),
        kernel_prior=_get(cfgp, s, 'kernel_prior', lambda v: v.strip().lower(),
                          KERNEL_PRIOR_FREE_SPACE),
        workers=_get(cfgp, s, 'workers', int, 1),
    )


def get_sweep(cfgp):
    s = 'sweep'
    return _build(
        cfgp, s, SweepGrid,
        wavenumbers=_get(cfgp, s, 'wavenumbers', _float_list, DEFAULT_SWEEP_WAVENUMBERS),
        layouts=_get(cfgp, s, 'layouts', _int_list, DEFAULT_SWEEP_LAYOUTS),
        widths=_get(cfgp, s, 'widths', _int_list, DEFAULT_SWEEP_WIDTHS),
        workers=_get(cfgp, s, 'workers', int, 1),
    )


def get_report(cfgp):
    s = 'report'
    return _build(
        cfgp, s, ReportConfig,
        plane=_get(cfgp, s, 'plane', lambda v: v.strip().lower(), DEFAULT_PLANE),
        coordinate=_get(cfgp, s, 'coordinate', float, DEFAULT_PLANE_COORDINATE),
        rel_error_floor=_get(cfgp, s, 'rel_error_floor', float, REL_ERROR_FLOOR),
        within=_get(cfgp, s, 'within', float, WITHIN_FRACTION),
        hist_bins=_get(cfgp, s, 'hist_bins', int, HIST_BINS),
        hist_range=_get(cfgp, s, 'hist_range', float, HIST_RANGE),
        chunk=_get(cfgp, s, 'chunk', int, PREDICT_CHUNK),
    )


def get_nyquist(cfgp):
    s = 'nyquist'
    return _build(
        cfgp, s, NyquistConfig,
        k_max=_get(cfgp, s, 'k_max', float, None),
        lattices=_get(cfgp, s, 'lattices', _word_list, DEFAULT_NYQUIST_LATTICES),
    )


def get_run_config(cfgp):
    """Resolve every section of a parsed configuration into a RunConfig."""
    step = _get(cfgp, 'mesh', 'step', float, DEFAULT_STEP)
    if step <= 0.0:
        _fail(cfgp, 'mesh', 'step', 'must be positive')
    k = _get(cfgp, 'wavenumber', 'k', float, DEFAULT_WAVENUMBER)
    if k < 0.0:
        _fail(cfgp, 'wavenumber', 'k', 'must be >= 0')
    counts = _get(cfgp, 'sensors', 'counts', _triple(_int_list), DEFAULT_SENSOR_COUNTS)
    grid = _get(cfgp, 'sensors', 'grid', _triple(_int_list), DEFAULT_GRID_COUNTS)
    for key, value in (('counts', counts), ('grid', grid)):
        if min(value) < 1:
            _fail(cfgp, 'sensors', key, 'all counts must be >= 1')
    return RunConfig(
        domain=get_domain(cfgp),
        step=step,
        wavenumber=k,
        bc=get_bc(cfgp),
        sensor_counts=counts,
        grid_counts=grid,
        training=get_training(cfgp),
        sweep=get_sweep(cfgp),
        report=get_report(cfgp),
        nyquist=get_nyquist(cfgp),
    )


def with_overrides(run, seeds=None, workers=None):
    """Apply the --seed-list / --workers command-line overrides."""
    training, sweep = run.training, run.sweep
    if seeds is not None:
        training = replace(training, seeds=tuple(seeds))
    if workers is not None:
        training = replace(training, workers=workers)
        sweep = replace(sweep, workers=workers)
    return replace(run, training=training, sweep=sweep)


def config_echo(run):
    """Plain-dict view of a RunConfig for manifests and reports."""
    return {
        'domain': list(run.domain.lengths),
        'step': run.step,
        'wavenumber': run.wavenumber,
        'bc': {face: [bc.kind, bc.value] for face, bc in run.bc.faces.items()},
        'sensor_counts': list(run.sensor_counts),
        'grid_counts': list(run.grid_counts),
        'training': _listify(asdict(run.training)),
        'sweep': _listify(asdict(run.sweep)),
        'report': asdict(run.report),
        'nyquist': _listify(asdict(run.nyquist)),
    }


def _listify(d):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
