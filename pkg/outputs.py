"""CSV and manifest writers, and the 2-D projection of a region CSV.

Numeric CSV fields carry 6 significant digits. Column contracts:

  region      r_i, r_s, r_j, r_l, witness_id, clamped
  hull        r_i, r_s, r_j, r_l
  simulation  n, trials, max_error_rate, ..., n_v, n_u, m_s, n_b, m_i
  equivalence witness_id, r_i, lambda, i_zv, a1_r_j, a2_r_j, a1_r_l, a2_r_l, deviation
  special     check, max_deviation, passed, samples
  projection  <x axis>, <y axis>
"""

import json
import platform
from pathlib import Path
from typing import Iterable

import joblib
import numpy as np
import pandas as pd
import scipy

from config import AXES, parse_plane
from errors import ConfigError
from binning import SimulationResult
from region import EquivalenceRecord, RegionSample, SpecialCaseReport

FLOAT_FORMAT = '%.6g'
REGION_COLUMNS = ['r_i', 'r_s', 'r_j', 'r_l', 'witness_id', 'clamped']
HULL_COLUMNS = ['r_i', 'r_s', 'r_j', 'r_l']
SIMULATION_COLUMNS = [
    'n', 'trials', 'max_error_rate', 'max_error_half_width', 'max_error_std_error',
    'worst_individual', 'error_rate', 'partial_error_rate', 'partial_std_error',
    'secrecy_leakage_bits', 'privacy_leakage_rate_est', 'fallback_rate',
    'identification_rate', 'secrecy_rate', 'template_rate',
    'delta', 'n_v', 'n_u', 'm_s', 'n_b', 'm_i',
]
EQUIVALENCE_COLUMNS = ['witness_id', 'r_i', 'lambda', 'i_zv', 'a1_r_j', 'a2_r_j',
                       'a1_r_l', 'a2_r_l', 'deviation']
SPECIAL_COLUMNS = ['check', 'max_deviation', 'passed', 'samples']

# Axes bounded from above (the region is closed downward in them).
_RATE_AXES = ('r_i', 'r_s')


def _write(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_region(sample: RegionSample, path: Path) -> Path:
    rows = [(p.r_i, p.r_s, p.r_j, p.r_l, p.witness_id, int(p.clamped)) for p in sample.points]
    return _write(pd.DataFrame(rows, columns=REGION_COLUMNS), path)


def write_hull(sample: RegionSample, path: Path) -> Path:
    rows = [(h.r_i, sample.r_s, h.r_j, h.r_l) for h in sample.hull]
    return _write(pd.DataFrame(rows, columns=HULL_COLUMNS), path)


def write_simulation(results: Iterable[SimulationResult], path: Path) -> Path:
    rows = []
    for r in results:
        p = r.params
        rows.append((r.n, r.trials, r.max_error_rate, r.max_error_half_width,
                     r.max_error_std_error, r.worst_individual, r.error_rate,
                     r.partial_error_rate, r.partial_std_error, r.secrecy_leakage_bits,
                     r.privacy_leakage_rate, r.fallback_rate, r.identification_rate,
                     r.secrecy_rate, r.template_rate, p.delta, p.n_v, p.n_u, p.m_s,
                     p.n_b, p.m_i))
    return _write(pd.DataFrame(rows, columns=SIMULATION_COLUMNS), path)


def write_equivalence(records: Iterable[EquivalenceRecord], path: Path) -> Path:
    rows = [(r.witness_id, r.r_i, r.lam, r.achieved_i_zv, r.a1_r_j, r.a2_r_j,
             r.a1_r_l, r.a2_r_l, r.deviation) for r in records]
    return _write(pd.DataFrame(rows, columns=EQUIVALENCE_COLUMNS), path)


def write_special_cases(report: SpecialCaseReport, path: Path) -> Path:
    checks = [('noiseless-enrollment', report.noiseless_max_deviation),
              ('single-individual', report.single_user_max_deviation),
              ('template-bound-ignores-r_s', report.secrecy_independence_deviation)]
    rows = [(name, dev, int(dev <= report.tolerance), report.samples) for name, dev in checks]
    return _write(pd.DataFrame(rows, columns=SPECIAL_COLUMNS), path)


def write_manifest(path: Path, config: dict, version: str, wall_time_s: float,
                   outputs: list[Path]) -> Path:
    manifest = {
        'config': config,
        'seed': config.get('seed'),
        'mode': config.get('mode'),
        'outputs': [str(p) for p in outputs],
        'versions': {
            'bis_region': version,
            'python': platform.python_version(),
            'numpy': np.__version__,
            'scipy': scipy.__version__,
            'pandas': pd.__version__,
            'joblib': joblib.__version__,
        },
        'wall_time_s': round(wall_time_s, 3),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)
    return path


def read_region(path: Path) -> pd.DataFrame:
    """Region CSV as a frame; a zero-byte file reads as empty."""
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=REGION_COLUMNS)
    except (OSError, pd.errors.ParserError) as e:
        raise ConfigError(f'cannot read region CSV {path}: {e}') from e
    missing = [c for c in AXES if c not in frame.columns]
    if missing:
        raise ConfigError(f'region CSV {path} lacks column(s) {", ".join(missing)}')
    for axis in AXES:
        if not pd.api.types.is_numeric_dtype(frame[axis]) and len(frame):
            raise ConfigError(f'region CSV {path}: column {axis} is not numeric')
    return frame


def projection_envelope(frame: pd.DataFrame, plane: str) -> pd.DataFrame:
    """Best x at every y level of the plane 'x,y'.

    Best means max for r_i / r_s and min for r_j / r_l; a row counts at
    level y when its own y is at least as good (>= for r_i / r_s, <= for
    r_j / r_l).  Output is sorted by y.
    """
    x, y = parse_plane(plane)
    if frame.empty:
        return pd.DataFrame(columns=[x, y])
    best = frame.groupby(y)[x].agg('max' if x in _RATE_AXES else 'min').sort_index()
    values = best.to_numpy(dtype=float)
    accumulate = np.maximum.accumulate if x in _RATE_AXES else np.minimum.accumulate
    if y in _RATE_AXES:
        values = accumulate(values[::-1])[::-1]
    else:
        values = accumulate(values)
    return pd.DataFrame({x: values, y: best.index.to_numpy(dtype=float)})


def emit_projection(region_csv: Path, plane: str, path: Path) -> Path:
    return _write(projection_envelope(read_region(region_csv), plane), path)
