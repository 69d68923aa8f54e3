"""Tests for the command-line front end."""

import sys
import os
import json
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from pathlib import Path

import numpy as np
import pandas as pd

from config import ExperimentConfig
from main import run
from outputs import REGION_COLUMNS, SIMULATION_COLUMNS, SPECIAL_COLUMNS

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'configs'

QUICK_SEARCH = [
    '--override', 'search.samples=128',
    '--override', 'search.refine_top=2',
    '--override', 'search.refine_steps=4',
    '--override', 'search.grid_points=21',
]


def _region(tmp_path, name='region.csv', config='fig2.json', extra=()):
    out = tmp_path / name
    code = run(['region', '--config', str(CONFIG_DIR / config), '--out', str(out),
                *QUICK_SEARCH, *extra])
    return code, out


def _write_config(tmp_path, data):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(data), encoding='utf-8')
    return path


class TestRegionMode:
    def test_binary_example(self, tmp_path):
        code, out = _region(tmp_path)
        assert code == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == REGION_COLUMNS
        assert abs(frame['r_i'].max() - 0.31991) <= 0.005
        assert (tmp_path / 'region_hull.csv').exists()
        assert (tmp_path / 'region.manifest.json').exists()

    def test_manifest_round_trip(self, tmp_path):
        _region(tmp_path, extra=['--seed', '17'])
        manifest = json.loads((tmp_path / 'region.manifest.json').read_text(encoding='utf-8'))
        config = ExperimentConfig.from_dict(manifest['config'])
        assert config.seed == 17 and manifest['seed'] == 17
        assert config.search.samples == 128
        assert manifest['mode'] == 'region'
        assert 'numpy' in manifest['versions']

    def test_byte_identical(self, tmp_path):
        _, a = _region(tmp_path, 'a.csv')
        _, b = _region(tmp_path, 'b.csv')
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / 'a_hull.csv').read_bytes() == (tmp_path / 'b_hull.csv').read_bytes()

    def test_six_significant_digits(self, tmp_path):
        _, out = _region(tmp_path)
        first = out.read_text(encoding='utf-8').splitlines()[1].split(',')
        digits = first[0].replace('.', '').replace('-', '').lstrip('0')
        assert len(digits.split('e')[0]) <= 6

    def test_plane_writes_projection(self, tmp_path):
        code, out = _region(tmp_path, config='fig3.json')
        assert code == 0
        frame = pd.read_csv(tmp_path / 'region_projection.csv')
        assert list(frame.columns) == ['r_j', 'r_i']
        assert np.all(np.diff(frame['r_i']) > 0)
        assert np.all(np.diff(frame['r_j']) >= 0)

    def test_non_stochastic_row(self, tmp_path):
        path = _write_config(tmp_path, {'system': {
            'source': [0.5, 0.5],
            'enrollment': [[0.9, 0.2], [0.1, 0.9]],
            'identification': [[0.9, 0.1], [0.1, 0.9]],
        }})
        out = tmp_path / 'out.csv'
        assert run(['region', '--config', str(path), '--out', str(out)]) == 2
        assert not out.exists()
        assert not (tmp_path / 'out.manifest.json').exists()

    def test_missing_config(self, tmp_path):
        assert run(['region', '--config', str(tmp_path / 'nope.json')]) == 2

    def test_bad_override(self, tmp_path):
        code, out = _region(tmp_path, extra=['--override', 'search.depth=2'])
        assert code == 2
        assert not out.exists()


class TestOtherModes:
    def test_special_cases(self, tmp_path):
        out = tmp_path / 'special.csv'
        code = run(['special-cases', '--config', str(CONFIG_DIR / 'single-user-gk.json'),
                    '--out', str(out), '--override', 'special_cases.samples=100'])
        assert code == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == SPECIAL_COLUMNS
        assert frame['passed'].tolist() == [1, 1, 1]

    def test_equivalence(self, tmp_path):
        out = tmp_path / 'eq.csv'
        code = run(['equivalence', '--config', str(CONFIG_DIR / 'fig2.json'),
                    '--out', str(out), '--override', 'equivalence.pairs=10'])
        assert code == 0
        frame = pd.read_csv(out)
        assert len(frame) == 10
        assert frame['deviation'].max() <= 1e-6 + 1e-9

    def test_simulate(self, tmp_path):
        out = tmp_path / 'sim.csv'
        code = run(['simulate', '--config', str(CONFIG_DIR / 'sim-toy.json'),
                    '--out', str(out), '--override', 'simulation.trials=100'])
        assert code == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == SIMULATION_COLUMNS
        assert frame['n'].tolist() == [8]
        assert frame['m_s'].tolist() == [2]

    def test_simulate_deterministic(self, tmp_path):
        outs = []
        for name in ('a.csv', 'b.csv'):
            out = tmp_path / name
            run(['simulate', '--config', str(CONFIG_DIR / 'sim-toy.json'), '--out', str(out),
                 '--override', 'simulation.trials=60', '--seed', '8'])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_toy_secrecy_leakage(self, tmp_path):
        out = tmp_path / 'sim.csv'
        code = run(['simulate', '--config', str(CONFIG_DIR / 'sim-toy.json'), '--out', str(out)])
        assert code == 0
        row = pd.read_csv(out).iloc[0]
        assert row['trials'] == 5000
        assert -1e-9 <= row['secrecy_leakage_bits'] < 0.1
        assert row['max_error_rate'] < 1.0

    def test_equivalence_deterministic(self, tmp_path):
        outs = []
        for name in ('a.csv', 'b.csv'):
            out = tmp_path / name
            run(['equivalence', '--config', str(CONFIG_DIR / 'fig2.json'), '--out', str(out),
                 '--override', 'equivalence.pairs=10'])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_special_cases_deterministic(self, tmp_path):
        outs = []
        for name in ('a.csv', 'b.csv'):
            out = tmp_path / name
            run(['special-cases', '--config', str(CONFIG_DIR / 'single-user-gk.json'),
                 '--out', str(out), '--override', 'special_cases.samples=100'])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_resource_limit(self, tmp_path):
        out = tmp_path / 'sim.csv'
        code = run(['simulate', '--config', str(CONFIG_DIR / 'sim-toy.json'),
                    '--out', str(out), '--override', 'simulation.storage_cap=10'])
        assert code == 4
        assert not out.exists()


class TestProjectMode:
    def test_from_region_csv(self, tmp_path):
        _, region = _region(tmp_path)
        out = tmp_path / 'proj.csv'
        assert run(['project', '--input', str(region), '--out', str(out)]) == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == ['r_j', 'r_i']
        assert np.all(np.diff(frame['r_j']) >= 0)

    def test_other_plane(self, tmp_path):
        _, region = _region(tmp_path)
        out = tmp_path / 'proj.csv'
        assert run(['project', '--input', str(region), '--plane', 'r_l,r_j',
                    '--out', str(out)]) == 0
        frame = pd.read_csv(out)
        assert np.all(np.diff(frame['r_j']) > 0)
        assert np.all(np.diff(frame['r_l']) <= 0)

    def test_empty_region_file(self, tmp_path):
        empty = tmp_path / 'empty.csv'
        empty.write_text('', encoding='utf-8')
        out = tmp_path / 'proj.csv'
        assert run(['project', '--input', str(empty), '--out', str(out)]) == 0
        assert len(pd.read_csv(out)) == 0

    def test_header_only_region_file(self, tmp_path):
        empty = tmp_path / 'empty.csv'
        empty.write_text(','.join(REGION_COLUMNS) + '\n', encoding='utf-8')
        out = tmp_path / 'proj.csv'
        assert run(['project', '--input', str(empty), '--out', str(out)]) == 0

    def test_same_axis_twice(self, tmp_path):
        _, region = _region(tmp_path)
        out = tmp_path / 'proj.csv'
        assert run(['project', '--input', str(region), '--plane', 'r_j,r_j',
                    '--out', str(out)]) == 2
        assert not out.exists()

    def test_malformed_csv(self, tmp_path):
        bad = tmp_path / 'bad.csv'
        bad.write_text('a,b\n1,2\n', encoding='utf-8')
        out = tmp_path / 'proj.csv'
        assert run(['project', '--input', str(bad), '--out', str(out)]) == 2
        assert not out.exists()

    def test_missing_arguments(self, tmp_path):
        assert run(['project', '--input', str(tmp_path / 'x.csv')]) == 2
