"""CLI interface for bemnet - data generation, training and the field-reconstruction studies."""

import logging
import sys
from argparse import ArgumentParser, ArgumentTypeError, RawTextHelpFormatter
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import config
from .analysis import (
    PLANE_AXIS, fit_sweep_table, lattice_spacings, nyquist_check, reconstruction_report,
)
from .bem import generate_dataset
from .constants import (
    CROSS_SECTION_CSV, DATASET_DIR, EXIT_OK, EXIT_USAGE, FIT_COLUMNS, FIT_CSV,
    HISTOGRAM_COLUMNS, HISTOGRAM_CSV, POINTS_COLUMNS, POINTS_CSV, RECONSTRUCT_DIR,
    SELECTED_FILE, SUMMARY_FILE, SWEEP_CSV, SWEEP_DIR, TARGET_FRACTION_WITHIN, TRAIN_DIR, Text,
)
from .errors import AllRunsFailed, BemnetError, DatasetMismatch, SchemaMismatch
from .model import predict_field
from .persistence import (
    check_manifest, load_checkpoint, load_dataset, load_history, read_json, save_checkpoint,
    save_dataset, save_history, write_csv, write_json,
)
from .sweep import STATUS_OK, load_sweep_table, run_sweep
from .training import TrainingData, select_record, train_multi_seed

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def _checkpoint_name(seed):
    return 'checkpoint_seed%d.json' % seed


def _history_name(seed):
    return 'history_seed%d.json' % seed


def _verdict(ok):
    return (Text.GREEN + 'PASS' if ok else Text.RED + 'FAIL') + Text.CLEAR


def _dataset_dir(args):
    return Path(args.dataset) if args.dataset else Path(args.out) / DATASET_DIR


def _load_checked_dataset(args, run):
    bundle = load_dataset(_dataset_dir(args))
    check_manifest(bundle.manifest, run.wavenumber)
    return bundle


# Commands

def cmd_generate(args, run):
    """Solve the test case and write boundary, sensor and grid CSVs plus a manifest."""
    data = generate_dataset(run.domain, run.step, run.wavenumber, run.bc,
                            run.sensor_counts, run.grid_counts)
    out = Path(args.out) / DATASET_DIR
    manifest = save_dataset(out, data.mesh, data.boundary, data.sensors, data.grid, {
        'config': config.config_echo(run),
        'wavenumber': run.wavenumber,
        'condition': data.boundary.condition,
    })

    print(Text.ULINED + 'Dataset written to %s' % out + Text.CLEAR)
    for name, rows in sorted(manifest['rows'].items()):
        print(Text.TWO_COLUMN % (name, rows))
    print(Text.TWO_COLUMN % ('condition estimate', '%.3e' % data.boundary.condition))
    return EXIT_OK


def _stored_records(train_dir, seeds):
    records = {}
    for seed in seeds:
        history = train_dir / _history_name(seed)
        if history.exists() and (train_dir / _checkpoint_name(seed)).exists():
            records[seed] = load_history(history)
    return records


def _write_selection(train_dir, records, failures):
    selected = records[select_record(records)]
    write_json(train_dir / SELECTED_FILE, {
        'seed': selected.seed,
        'checkpoint': _checkpoint_name(selected.seed),
        'best_epoch': selected.best_epoch,
        'best_val_loss': selected.best_val_loss,
        'failures': [{'seed': s, 'reason': reason} for s, reason in failures],
        'records': [{'seed': r.seed, 'epochs': r.epochs, 'best_epoch': r.best_epoch,
                     'best_train_loss': r.best_train_loss, 'best_val_loss': r.best_val_loss,
                     'stop_reason': r.stop_reason} for r in records],
    })
    return selected


def cmd_train(args, run):
    """Train every configured seed and select the best validation checkpoint."""
    bundle = _load_checked_dataset(args, run)
    train_dir = Path(args.out) / TRAIN_DIR
    seeds = run.training.seeds

    stored = _stored_records(train_dir, seeds) if args.resume else {}
    missing = [seed for seed in seeds if seed not in stored]
    new_records, failures = [], []
    if missing:
        data = TrainingData(bundle.mesh, bundle.boundary, bundle.sensors, run.wavenumber)
        try:
            result = train_multi_seed(data, replace(run.training, seeds=tuple(missing)))
        except AllRunsFailed:
            if not stored:
                raise
            logger.warning('no new seed finished; selecting among stored runs')
        else:
            train_dir.mkdir(parents=True, exist_ok=True)
            for model, record in zip(result.models, result.records):
                save_checkpoint(train_dir / _checkpoint_name(record.seed), model, {
                    'seed': record.seed,
                    'best_epoch': record.best_epoch,
                    'best_val_loss': record.best_val_loss,
                })
                save_history(train_dir / _history_name(record.seed), record)
            new_records, failures = result.records, result.failures
    else:
        logger.info('resume: all %d seeds already trained', len(seeds))

    by_seed = dict(stored)
    by_seed.update((r.seed, r) for r in new_records)
    records = [by_seed[seed] for seed in seeds if seed in by_seed]
    selected = _write_selection(train_dir, records, failures)

    print(Text.ULINED + Text.TRAIN_COLUMNS % ('Seed', 'Epochs', 'Best epoch', 'Wall time',
                                             'Best val loss') + Text.CLEAR)
    for r in records:
        mark = ' *' if r is selected else ''
        # runs restored by --resume have no timing
        wall = '%.1f s' % r.wall_time if r.wall_time else '-'
        print(Text.TRAIN_COLUMNS % (r.seed, r.epochs, r.best_epoch, wall,
                                    '%.6e%s' % (r.best_val_loss, mark)))
    for seed, reason in failures:
        print(Text.RED + Text.TWO_COLUMN % ('seed %d aborted' % seed, reason) + Text.CLEAR)
    return EXIT_OK


def _selected_checkpoint(args):
    if args.checkpoint:
        return Path(args.checkpoint)
    train_dir = Path(args.out) / TRAIN_DIR
    selection = read_json(train_dir / SELECTED_FILE)
    try:
        return train_dir / selection['checkpoint']
    except KeyError:
        raise SchemaMismatch('%s: no checkpoint recorded' % (train_dir / SELECTED_FILE))


def cmd_reconstruct(args, run):
    """Predict the reference grid with a trained model and write the error report."""
    bundle = _load_checked_dataset(args, run)
    checkpoint = load_checkpoint(_selected_checkpoint(args), run.training.hidden_width,
                                 run.training.depth)
    prior_k = checkpoint.model.wavenumber
    if prior_k is not None and prior_k != float(bundle.manifest['wavenumber']):
        raise DatasetMismatch('checkpoint corrects the kernels at k=%r, dataset has k=%r'
                              % (prior_k, bundle.manifest['wavenumber']))
    rep = run.report
    predicted = predict_field(checkpoint.model, bundle.mesh, bundle.boundary, bundle.grid,
                              rep.chunk)
    report = reconstruction_report(bundle.grid, predicted, rep.rel_error_floor, rep.within,
                                   run.training.loss)

    grid_counts = bundle.manifest.get('config', {}).get('grid_counts', run.grid_counts)
    axis = PLANE_AXIS[rep.plane]
    half_spacing = bundle.mesh.domain.lengths[axis] / grid_counts[axis] / 2.0
    section = report.cross_section(rep.plane, rep.coordinate, half_spacing)
    edges, counts, mass = report.histogram(rep.hist_bins, rep.hist_range)

    def point_rows(index):
        for i in index:
            yield (*report.grid.points[i], report.predicted[i], float(report.grid.values[i]),
                   report.rel_error[i], int(report.evaluable[i]))

    out = Path(args.out) / RECONSTRUCT_DIR
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / POINTS_CSV, POINTS_COLUMNS, point_rows(range(len(report.grid))))
    write_csv(out / CROSS_SECTION_CSV, POINTS_COLUMNS, point_rows(section))
    write_csv(out / HISTOGRAM_CSV, HISTOGRAM_COLUMNS,
              zip(edges[:-1], edges[1:], counts.tolist(), mass))
    summary = report.summary()
    summary.update({
        'checkpoint': checkpoint.metadata,
        'cross_section': {'plane': rep.plane, 'coordinate': rep.coordinate,
                          'half_spacing': half_spacing, 'points': len(section)},
    })
    write_json(out / SUMMARY_FILE, summary)

    print(Text.ULINED + 'Reconstruction of %d grid points' % len(report.grid) + Text.CLEAR)
    print(Text.TWO_COLUMN % ('evaluable points', report.n_evaluable))
    print(Text.TWO_COLUMN % ('excluded (|u| below floor)', report.n_excluded))
    for p, v in report.quantiles.items():
        print(Text.TWO_COLUMN % ('rel. error q%g' % p, '%+.4e' % v))
    print(Text.TWO_COLUMN % ('testing MSE', '%.6e' % report.test_mse))
    print(Text.TWO_COLUMN % ('testing loss', '%.6e' % report.test_loss))
    print(Text.TWO_COLUMN % ('within +/-%g%%' % (100 * rep.within),
                             '%.4f %s' % (report.fraction_within,
                                          _verdict(report.fraction_within
                                                   >= TARGET_FRACTION_WITHIN))))
    return EXIT_OK


def cmd_sweep(args, run):
    """Generate, train and score every (k, layout, width) cell."""
    rows = run_sweep(run, Path(args.out) / SWEEP_DIR, resume=args.resume)
    print(Text.ULINED + Text.FOUR_COLUMN % ('k', 'sensors/width', 'best val loss',
                                            'testing MSE') + Text.CLEAR)
    for row in rows:
        if row['status'] == STATUS_OK:
            print(Text.FOUR_COLUMN % ('%g' % row['k'], '%d/%d' % (row['n_sensors'], row['width']),
                                      '%.6e' % row['best_val_loss'], '%.6e' % row['test_mse']))
        else:
            print(Text.RED + Text.FOUR_COLUMN % ('%g' % row['k'],
                                                 '%d/%d' % (row['n_sensors'], row['width']),
                                                 'failed', '') + Text.CLEAR)
    return EXIT_OK


def cmd_nyquist(args, run):
    """Check the sampling density against the largest wavenumber."""
    k_max = args.k_max
    if k_max is None:
        k_max = run.nyquist.k_max
    if k_max is None:
        k_max = max(run.sweep.wavenumbers)
    if args.dr_max is not None:
        spacings, lattices = {'given': args.dr_max}, ('given',)
    else:
        spacings, lattices = lattice_spacings(run), run.nyquist.lattices
    report = nyquist_check(k_max, spacings, lattices)

    print(Text.ULINED + Text.FOUR_COLUMN % ('Lattice', 'dr', 'pi/k_max', 'k_sampling')
          + Text.CLEAR)
    for check in report.lattices:
        print(Text.FOUR_COLUMN % (check.name, '%.6g' % check.dr, '%.6g' % check.bound,
                                  '%.6g  %s' % (check.k_sampling, _verdict(check.passed))))
    print(Text.RULE)
    print(Text.TWO_COLUMN % ('k_max', '%g' % report.k_max))
    print(Text.TWO_COLUMN % ('dr_max (%s)' % ', '.join(lattices), '%.6g' % report.dr_max))
    print(Text.TWO_COLUMN % ('bound pi/k_max', '%.12g' % report.bound))
    print(Text.TWO_COLUMN % ('k_sampling 2pi/dr_max', '%.12g' % report.k_sampling))
    print(Text.TWO_COLUMN % ('verdict', _verdict(report.passed)))
    return EXIT_OK


def cmd_fit_bound(args, run):
    """Fit the error-bound constants to the sweep's testing MSE."""
    table = Path(args.table) if args.table else Path(args.out) / SWEEP_DIR / SWEEP_CSV
    fits = fit_sweep_table(load_sweep_table(table))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / FIT_CSV, FIT_COLUMNS,
              ((n, w, f.dr, f.n_points, f.c1, f.c2, f.residual) for n, w, f in fits))

    print(Text.ULINED + Text.FOUR_COLUMN % ('sensors/width', 'C1', 'C2', 'residual')
          + Text.CLEAR)
    for n, w, fit in fits:
        print(Text.FOUR_COLUMN % ('%d/%d' % (n, w), '%.6e' % fit.c1, '%.6e' % fit.c2,
                                  '%.3e' % fit.residual))
    return EXIT_OK


# Argument parsing

def _seed_list(value):
    try:
        seeds = tuple(int(v) for v in value.split(',') if v.strip())
    except ValueError:
        raise ArgumentTypeError('expected comma-separated integers, got %r' % value)
    if not seeds:
        raise ArgumentTypeError('empty seed list')
    return seeds


def _positive_int(value):
    n = int(value)
    if n < 1:
        raise ArgumentTypeError('must be >= 1')
    return n


def build_parser():
    parser = ArgumentParser(prog='bemnet', formatter_class=RawTextHelpFormatter, epilog=
'''
┌─ TIPS ───────────────────────────────────────────────────┐
│ Typical run: generate, train, reconstruct (same --out).  │
│ Desk-scale settings live in etc/acceptance.conf.         │
│ Exit codes: 0 ok, 1 numerical failure, 2 usage error.    │
└──────────────────────────────────────────────────────────┘
''')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='─ log progress (-v INFO, -vv DEBUG)\n ')
    parser.add_argument('--config', metavar='PATH',
                        help='┬ INI run configuration\n'
                             '└ defaults reproduce the box test case\n ')
    parser.add_argument('--out', metavar='DIR', default='.',
                        help='─ run directory for all artifacts\n ')
    parser.add_argument('--seed-list', type=_seed_list, metavar='0,1,2',
                        help='─ override [training] seeds\n ')
    parser.add_argument('--workers', type=_positive_int, metavar='N',
                        help='─ parallel processes for seeds and sweep cells\n ')

    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    p = sub.add_parser('generate', help='solve the BEM test case and write the dataset')
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser('train', help='train all seeds and select the best checkpoint')
    p.add_argument('--dataset', metavar='DIR', help='dataset directory (default OUT/dataset)')
    p.add_argument('--resume', action='store_true', help='reuse seeds already trained')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('reconstruct', help='predict the reference grid and report errors')
    p.add_argument('--dataset', metavar='DIR', help='dataset directory (default OUT/dataset)')
    p.add_argument('--checkpoint', metavar='PATH', help='checkpoint (default: selected seed)')
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser('sweep', help='wavenumber / layout / width sensitivity study')
    p.add_argument('--resume', action='store_true', help='skip completed cells')
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('nyquist', help='sampling-density check')
    p.add_argument('--k-max', type=float, metavar='K', help='largest wavenumber')
    p.add_argument('--dr-max', type=float, metavar='DR', help='check this spacing instead')
    p.set_defaults(func=cmd_nyquist)

    p = sub.add_parser('fit-bound', help='fit error-bound constants to the sweep table')
    p.add_argument('--table', metavar='PATH', help='sweep table (default OUT/sweep/sweep.csv)')
    p.set_defaults(func=cmd_fit_bound)
    return parser


def _setup_logging(verbosity):
    level = logging.WARNING if verbosity == 0 else (
        logging.INFO if verbosity == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT)


def main(argv=None):
    """Main CLI entry point; returns the process exit code."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE

    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if args.command == 'nyquist':
        if args.k_max is not None and args.k_max < 0.0:
            parser.error('--k-max must be >= 0')
        if args.dr_max is not None and not args.dr_max > 0.0:
            parser.error('--dr-max must be positive')

    try:
        cfgp = config.load_config(args.config)
        run = config.with_overrides(config.get_run_config(cfgp), args.seed_list, args.workers)
        return args.func(args, run)
    except BemnetError as e:
        logger.error('%s', e)
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
