"""Constants for bemnet - defaults, face labels, file schemas and exit codes."""

import math

# Face labels in mesh order
FACES = ('x-', 'x+', 'y-', 'y+', 'z-', 'z+')

# Axis index and side (0 = low wall, 1 = high wall) for each face
FACE_AXIS = {
    'x-': (0, 0), 'x+': (0, 1),
    'y-': (1, 0), 'y+': (1, 1),
    'z-': (2, 0), 'z+': (2, 1),
}

BC_DIRICHLET = 'dirichlet'
BC_NEUMANN = 'neumann'
BC_KINDS = (BC_DIRICHLET, BC_NEUMANN)

# Geometric tolerances
STEP_TOLERANCE = 1e-9
BOUNDARY_TOLERANCE = 1e-12
COINCIDENT_TOLERANCE = 1e-12

# Test-case defaults: box (1, 5, 3), 0.1 mesh, u = 1 on x+ and z-, q = 1 elsewhere
DEFAULT_LENGTHS = (1.0, 5.0, 3.0)
DEFAULT_STEP = 0.1
DEFAULT_WAVENUMBER = 1.0
DEFAULT_BC = {
    'x-': (BC_NEUMANN, 1.0),
    'x+': (BC_DIRICHLET, 1.0),
    'y-': (BC_NEUMANN, 1.0),
    'y+': (BC_NEUMANN, 1.0),
    'z-': (BC_DIRICHLET, 1.0),
    'z+': (BC_NEUMANN, 1.0),
}
DEFAULT_SENSOR_COUNTS = (1, 5, 3)
DEFAULT_GRID_COUNTS = (10, 50, 30)

# BEM quadrature
NEAR_FIELD_FACTOR = 2.0      # refine panels closer than this many panel sides
MAX_REFINE_DEPTH = 3
SELF_PANEL_STATIC = 4.0 * math.log(1.0 + math.sqrt(2.0))
MAX_CONDITION = 1e12
ASSEMBLY_BLOCK_ROWS = 256

# Network and training defaults
DEFAULT_HIDDEN_WIDTH = 20
DEFAULT_DEPTH = 3
INPUT_WIDTH = 6
OUTPUT_ACTIVATIONS = ('linear', 'tanh')
LOSS_PAPER = 'paper'
LOSS_RMSE = 'rmse'
LOSS_KINDS = (LOSS_PAPER, LOSS_RMSE)
# Kernels the stacks correct: 'free-space' scales the panel integrals of the
# Helmholtz kernel by (1 + stack output), 'none' uses the stack output as the kernel
KERNEL_PRIOR_FREE_SPACE = 'free-space'
KERNEL_PRIOR_NONE = 'none'
KERNEL_PRIORS = (KERNEL_PRIOR_FREE_SPACE, KERNEL_PRIOR_NONE)
DEFAULT_LEARNING_RATE = 5e-5
DEFAULT_BATCH_SIZE = 5
DEFAULT_MAX_EPOCHS = 5000
DEFAULT_PATIENCE = 250
DEFAULT_VALIDATION_FRACTION = 0.20
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_SPLIT_SEED = 0
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8
IMPROVEMENT_THRESHOLD = 1e-12

# Sweep defaults
DEFAULT_SWEEP_WAVENUMBERS = tuple(float(k) for k in range(11))
DEFAULT_SWEEP_LAYOUTS = (15, 120, 960)
DEFAULT_SWEEP_WIDTHS = (20, 40)
MONOTONIC_RANGE = (0.0, 4.0)

# Reconstruction report
DEFAULT_PLANE = 'z'
DEFAULT_PLANE_COORDINATE = 1.5
REL_ERROR_FLOOR = 1e-6
WITHIN_FRACTION = 0.05
TARGET_FRACTION_WITHIN = 0.80
HIST_BINS = 50
HIST_RANGE = 0.25
PREDICT_CHUNK = 64
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)

# Nyquist check
NYQUIST_LATTICES = ('collocation', 'sensors', 'grid')
DEFAULT_NYQUIST_LATTICES = ('collocation', 'grid')

# On-disk formats
FORMAT_VERSION = 1
FLOAT_FORMAT = '%.17g'
BOUNDARY_CSV = 'boundary.csv'
SENSORS_CSV = 'sensors.csv'
GRID_CSV = 'grid.csv'
MANIFEST_FILE = 'manifest.json'
BOUNDARY_COLUMNS = ('face', 'cx', 'cy', 'cz', 'nx', 'ny', 'nz', 'area', 'u', 'q')
SENSORS_COLUMNS = ('x', 'y', 'z', 'u')
GRID_COLUMNS = ('x', 'y', 'z', 'u_ref')
POINTS_COLUMNS = ('x', 'y', 'z', 'u_pred', 'u_ref', 'rel_error', 'evaluable')
HISTOGRAM_COLUMNS = ('bin_lo', 'bin_hi', 'count', 'mass')
SWEEP_COLUMNS = ('k', 'n_sensors', 'width', 'dr', 'status', 'selected_seed',
                 'best_train_loss', 'best_val_loss', 'test_mse', 'test_loss',
                 'fraction_within')
FIT_COLUMNS = ('n_sensors', 'width', 'dr', 'n_points', 'c1', 'c2', 'residual')
MONOTONIC_COLUMNS = ('n_sensors', 'width', 'kind', 'k_lo', 'k_hi', 'mse_lo', 'mse_hi',
                     'increasing')
SUMMARY_FILE = 'summary.json'
POINTS_CSV = 'points.csv'
HISTOGRAM_CSV = 'histogram.csv'
CROSS_SECTION_CSV = 'cross_section.csv'
SWEEP_CSV = 'sweep.csv'
MONOTONIC_CSV = 'monotonicity.csv'
FIT_CSV = 'fit_bound.csv'

# Run directory layout
DATASET_DIR = 'dataset'
TRAIN_DIR = 'train'
RECONSTRUCT_DIR = 'reconstruct'
SWEEP_DIR = 'sweep'
SELECTED_FILE = 'selected.json'
CELL_RESULT_FILE = 'cell.json'

# Exit codes
EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2


# Text formatting (for CLI output)
class Text:
    GREEN = '\033[32;1m'
    RED = '\033[31;1m'
    ULINED = '\033[4m'
    CLEAR = '\033[0m'
    TWO_COLUMN = '%-28s %s'
    THREE_COLUMN = '%-14s %-20s %s'
    FOUR_COLUMN = '%-14s %-16s %-16s %s'
    TRAIN_COLUMNS = '%-8s %-10s %-12s %-12s %s'
    RULE = '-' * 60
