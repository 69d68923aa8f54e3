"""Tests for config module."""

import sys
import os
import json
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from pathlib import Path

import pytest

from config import ExperimentConfig, SearchConfig, parse_plane
from errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'configs'


class TestExperimentConfig:
    def test_defaults(self):
        c = ExperimentConfig()
        assert c.mode == 'region'
        assert c.r_s == 0.0
        assert c.search.samples == 4096
        assert c.simulation.codebook_mode == 'fresh'

    def test_round_trip(self):
        c = ExperimentConfig.from_dict({'mode': 'simulate', 'seed': 9,
                                        'search': {'samples': 128}})
        assert ExperimentConfig.from_dict(c.to_dict()) == c

    def test_save_load(self, tmp_path):
        c = ExperimentConfig(r_s=0.05, plane='r_l,r_i')
        path = tmp_path / 'sub' / 'c.json'
        c.save(path)
        assert ExperimentConfig.load(path) == c

    def test_unknown_field(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'sead': 1})

    def test_unknown_nested_field(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'search': {'sample': 10}})

    def test_non_stochastic_row(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'system': {
                'source': [0.5, 0.5],
                'enrollment': [[0.9, 0.2], [0.1, 0.9]],
                'identification': [[0.9, 0.1], [0.1, 0.9]],
            }})

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'mode': 'plot'})

    def test_negative_secrecy_rate(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'r_s': -0.1})

    def test_u_channel_rows(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'simulation': {'u_channel': [[1.0]]}})

    def test_counts_keys(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'simulation': {'counts': {'n_v': 2}}})

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text('{not json', encoding='utf-8')
        with pytest.raises(ConfigError):
            ExperimentConfig.load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / 'absent.json')

    def test_bundled_configs_load(self):
        names = sorted(p.name for p in CONFIG_DIR.glob('*.json'))
        assert {'fig2.json', 'fig3.json', 'noiseless-iw.json', 'single-user-gk.json',
                'sim-toy.json'} <= set(names)
        for name in names:
            ExperimentConfig.load(CONFIG_DIR / name)

    def test_bundled_fig2(self):
        c = ExperimentConfig.load(CONFIG_DIR / 'fig2.json')
        assert c.system.source == [0.5, 0.5]
        assert c.system.enrollment == [[0.9, 0.1], [0.1, 0.9]]
        assert c.search == SearchConfig()


class TestOverride:
    def test_number(self):
        c = ExperimentConfig().apply_override('search.samples=256')
        assert c.search.samples == 256

    def test_string(self):
        c = ExperimentConfig().apply_override('plane=r_j,r_i')
        assert c.plane == 'r_j,r_i'

    def test_json_value(self):
        c = ExperimentConfig().apply_override('simulation.block_lengths=[8, 16]')
        assert c.simulation.block_lengths == [8, 16]

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().apply_override('search.depth=3')

    def test_not_a_section(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().apply_override('seed.value=3')

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().apply_override('seed')

    def test_override_revalidates(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().apply_override('mode="nope"')

    def test_original_untouched(self):
        c = ExperimentConfig()
        c.apply_override('seed=4')
        assert c.seed == 0

    def test_dumps_cleanly(self):
        c = ExperimentConfig().apply_override('simulation.delta=0.25')
        assert json.loads(json.dumps(c.to_dict()))['simulation']['delta'] == 0.25


class TestParsePlane:
    def test_default(self):
        assert parse_plane('r_j,r_i') == ('r_j', 'r_i')

    def test_spaces(self):
        assert parse_plane(' r_l , r_s ') == ('r_l', 'r_s')

    def test_same_axis(self):
        with pytest.raises(ConfigError):
            parse_plane('r_j,r_j')

    def test_unknown_axis(self):
        with pytest.raises(ConfigError):
            parse_plane('r_j,r_x')
