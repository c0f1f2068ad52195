"""On-disk formats: dataset CSVs + manifest, checkpoints, training histories.

All numbers are written with 17 significant digits (CSV) or Python's
round-trip float repr (JSON), so every artifact reloads bit-identically.
Files are written to a temporary name and renamed into place.
"""

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from . import __version__
from .bem import CauchyData
from .constants import (
    BOUNDARY_COLUMNS, BOUNDARY_CSV, FACES, FLOAT_FORMAT, FORMAT_VERSION, GRID_COLUMNS,
    GRID_CSV, KERNEL_PRIOR_FREE_SPACE, KERNEL_PRIOR_NONE, MANIFEST_FILE, SENSORS_COLUMNS,
    SENSORS_CSV,
)
from .errors import (
    ChecksumMismatch, DatasetMismatch, SchemaMismatch, ShapeMismatch, VersionUnsupported,
)
from .geometry import BoundaryMesh, BoxDomain, PointSet
from .model import CoordinateNormalization, GreensNetModel
from .nn import DenseStack
from .training import TrainingRecord


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    mesh: BoundaryMesh
    boundary: CauchyData    # real parts
    sensors: PointSet
    grid: PointSet
    manifest: Dict


@dataclass(frozen=True, eq=False)
class Checkpoint:
    model: GreensNetModel
    metadata: Dict
    format_version: int = FORMAT_VERSION


# Low-level helpers

def write_text(path, text):
    """Exclusive write: temporary file, then atomic rename."""
    path = Path(path)
    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'w', newline='') as f:
        f.write(text)
    os.replace(tmp, path)


def write_json(path, obj):
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + '\n')


def read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise SchemaMismatch('%s: missing file' % path)
    except json.JSONDecodeError as e:
        raise SchemaMismatch('%s:%d: invalid JSON (%s)' % (path, e.lineno, e.msg))


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


def csv_text(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows):
    write_text(path, csv_text(columns, rows))


def read_csv(path, columns, parsers):
    """Rows of a CSV with an exact header; every cell parsed by its column's parser."""
    path = Path(path)
    if not path.exists():
        raise SchemaMismatch('%s: missing file' % path)
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != tuple(columns):
            raise SchemaMismatch('%s:1: header %r, expected %r' % (path, header, list(columns)))
        rows = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                raise SchemaMismatch('%s:%d: %d fields, expected %d'
                                     % (path, line, len(row), len(columns)))
            parsed = []
            for name, parse, cell in zip(columns, parsers, row):
                try:
                    parsed.append(parse(cell))
                except ValueError:
                    raise SchemaMismatch('%s:%d: column %s: cannot parse %r'
                                         % (path, line, name, cell))
            rows.append(parsed)
    return rows


def sha256(path):
    with open(path, 'rb') as f:
        return hashlib.sha256(f.read()).hexdigest()


def _face(cell):
    if cell not in FACES:
        raise ValueError(cell)
    return cell


# Datasets

def save_dataset(path, mesh, boundary, sensors, grid, manifest):
    """Write the three dataset CSVs and a manifest carrying their checksums."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    boundary_rows = (
        (mesh.faces[j], *mesh.centroids[j], *mesh.normals[j], mesh.areas[j],
         float(boundary.u[j]), float(boundary.q[j]))
        for j in range(len(mesh))
    )
    write_csv(path / BOUNDARY_CSV, BOUNDARY_COLUMNS, boundary_rows)
    write_csv(path / SENSORS_CSV, SENSORS_COLUMNS,
              ((*p, float(v)) for p, v in zip(sensors.points, sensors.values)))
    write_csv(path / GRID_CSV, GRID_COLUMNS,
              ((*p, float(v)) for p, v in zip(grid.points, grid.values)))

    manifest = dict(manifest)
    manifest.update({
        'format_version': FORMAT_VERSION,
        'generator_version': __version__,
        'mesh': {
            'lengths': list(mesh.domain.lengths),
            'step': mesh.step,
            'elements': len(mesh),
            'surface_area': float(mesh.areas.sum()),
        },
        'rows': {BOUNDARY_CSV: len(mesh), SENSORS_CSV: len(sensors), GRID_CSV: len(grid)},
        'checksums': {name: sha256(path / name)
                      for name in (BOUNDARY_CSV, SENSORS_CSV, GRID_CSV)},
    })
    write_json(path / MANIFEST_FILE, manifest)
    return manifest


def load_dataset(path) -> DatasetBundle:
    path = Path(path)
    manifest = read_json(path / MANIFEST_FILE)
    if manifest.get('format_version') != FORMAT_VERSION:
        raise VersionUnsupported('%s: dataset format %r, expected %d'
                                 % (path, manifest.get('format_version'), FORMAT_VERSION))
    rows = read_csv(path / BOUNDARY_CSV, BOUNDARY_COLUMNS, (_face,) + (float,) * 9)
    faces = np.array([r[0] for r in rows], dtype='<U2')
    values = np.array([r[1:] for r in rows], dtype=float).reshape(-1, 9)
    areas = values[:, 6]
    mesh_info = manifest.get('mesh')
    if not isinstance(mesh_info, dict):
        raise SchemaMismatch('%s: manifest has no mesh section' % (path / MANIFEST_FILE))
    mesh = BoundaryMesh(
        domain=BoxDomain(tuple(mesh_info['lengths'])),
        step=float(mesh_info['step']),
        centroids=values[:, 0:3].copy(),
        normals=values[:, 3:6].copy(),
        areas=areas.copy(),
        faces=faces,
        sides=np.sqrt(areas),
    )
    boundary = CauchyData(values[:, 7].copy(), values[:, 8].copy())

    sensors = _load_points(path / SENSORS_CSV, SENSORS_COLUMNS)
    grid = _load_points(path / GRID_CSV, GRID_COLUMNS)

    for name, digest in manifest.get('checksums', {}).items():
        if sha256(path / name) != digest:
            raise ChecksumMismatch('%s: checksum does not match manifest' % (path / name))
    return DatasetBundle(mesh, boundary, sensors, grid, manifest)


def _load_points(path, columns):
    rows = np.array(read_csv(path, columns, (float,) * 4), dtype=float).reshape(-1, 4)
    return PointSet(rows[:, :3].copy(), rows[:, 3].copy())


def check_manifest(manifest, wavenumber):
    """Refuse a dataset generated for a different wavenumber."""
    stored = manifest.get('wavenumber')
    if stored is None or float(stored) != float(wavenumber):
        raise DatasetMismatch('dataset was generated for k=%r, configuration asks for k=%r'
                              % (stored, wavenumber))


# Checkpoints

def _stack_to_json(stack):
    return {
        'sizes': list(stack.sizes),
        'output_activation': stack.output_activation,
        'layers': [{'shape': list(w.shape), 'weights': w.ravel().tolist(), 'bias': b.tolist()}
                   for w, b in zip(stack.weights, stack.biases)],
    }


def _stack_from_json(obj, path):
    sizes = tuple(obj['sizes'])
    weights, biases = [], []
    for l, layer in enumerate(obj['layers']):
        shape = tuple(layer['shape'])
        w = np.asarray(layer['weights'], dtype=float)
        b = np.asarray(layer['bias'], dtype=float)
        if w.size != int(np.prod(shape)) or b.size != shape[0]:
            raise ShapeMismatch('%s: layer %d holds %d weights for declared shape %s'
                                % (path, l, w.size, shape))
        weights.append(w.reshape(shape))
        biases.append(b)
    return DenseStack(sizes, tuple(weights), tuple(biases), obj['output_activation'])


def _prior_wavenumber(obj, path):
    """Wavenumber of a free-space kernel prior, None for bare kernel stacks."""
    prior = obj['kernel_prior']
    if prior == KERNEL_PRIOR_NONE:
        return None
    if prior != KERNEL_PRIOR_FREE_SPACE or not isinstance(obj.get('wavenumber'), (int, float)):
        raise SchemaMismatch('%s: kernel prior %r with wavenumber %r'
                             % (path, prior, obj.get('wavenumber')))
    return float(obj['wavenumber'])


def save_checkpoint(path, model: GreensNetModel, metadata):
    write_json(path, {
        'format_version': FORMAT_VERSION,
        'layer_sizes': list(model.g_stack.sizes),
        'hidden_width': model.hidden_width,
        'depth': model.depth,
        'normalization': {'scale': list(model.normalization.scale),
                          'offset': list(model.normalization.offset)},
        'kernel_prior': model.kernel_prior,
        'wavenumber': model.wavenumber,
        'stacks': {'g': _stack_to_json(model.g_stack),
                   'dgdn': _stack_to_json(model.dgdn_stack)},
        'metadata': dict(metadata),
    })


def load_checkpoint(path, hidden_width: Optional[int] = None, depth: Optional[int] = None):
    """Load a checkpoint; optional width/depth must match the stored stacks."""
    obj = read_json(path)
    version = obj.get('format_version')
    if version != FORMAT_VERSION:
        raise VersionUnsupported('%s: checkpoint format %r, expected %d'
                                 % (path, version, FORMAT_VERSION))
    try:
        model = GreensNetModel(
            g_stack=_stack_from_json(obj['stacks']['g'], path),
            dgdn_stack=_stack_from_json(obj['stacks']['dgdn'], path),
            normalization=CoordinateNormalization(
                tuple(obj['normalization']['scale']), tuple(obj['normalization']['offset'])),
            wavenumber=_prior_wavenumber(obj, path),
        )
    except KeyError as e:
        raise SchemaMismatch('%s: missing checkpoint field %s' % (path, e))
    if list(model.g_stack.sizes) != obj['layer_sizes']:
        raise ShapeMismatch('%s: declared layer sizes %r, stored %r'
                            % (path, obj['layer_sizes'], list(model.g_stack.sizes)))
    if hidden_width is not None and model.hidden_width != hidden_width:
        raise ShapeMismatch('%s: checkpoint width %d, configuration asks for %d'
                            % (path, model.hidden_width, hidden_width))
    if depth is not None and model.depth != depth:
        raise ShapeMismatch('%s: checkpoint depth %d, configuration asks for %d'
                            % (path, model.depth, depth))
    return Checkpoint(model, obj.get('metadata', {}), version)


# Training histories

def save_history(path, record: TrainingRecord):
    write_json(path, {
        'seed': record.seed,
        'train_loss': record.train_loss,
        'val_loss': record.val_loss,
        'best_epoch': record.best_epoch,
        'best_val_loss': record.best_val_loss,
        'stop_reason': record.stop_reason,
    })


def load_history(path) -> TrainingRecord:
    obj = read_json(path)
    try:
        return TrainingRecord(
            seed=int(obj['seed']),
            train_loss=[float(v) for v in obj['train_loss']],
            val_loss=[float(v) for v in obj['val_loss']],
            best_epoch=int(obj['best_epoch']),
            best_val_loss=float(obj['best_val_loss']),
            stop_reason=str(obj['stop_reason']),
        )
    except KeyError as e:
        raise SchemaMismatch('%s: missing history field %s' % (path, e))
