import os

import pytest
import simplejson as json

from ccd_anticipation.check_env import OUTPUT_ROOT_ENV, resolve_output_root
from ccd_anticipation.config import ExperimentConfig, config_from_dict, flatten_config, \
    load_config
from ccd_anticipation.errors import ConfigError

CONFIGS = os.path.join(os.path.dirname(__file__), '..', 'configs')


@pytest.mark.parametrize('name', ['desk.yaml', 'full.yaml'])
def test_shipped_configs_load(name):
    cfg = load_config(os.path.join(CONFIGS, name))
    assert cfg.teacher_model.modality == 'text'
    assert cfg.student_model.modality == 'visual'
    assert cfg.distill.mode == 'ccd'
    assert len(cfg.seeds) == 3
    assert cfg.ablation.dims[0] == cfg.teacher_model.d


def test_defaults():
    cfg = config_from_dict({})
    assert cfg == ExperimentConfig().validate()
    assert cfg.distill.alpha == 0.2
    assert cfg.distill.weight == 10.0
    assert cfg.train.lr == 1e-4
    assert cfg.corpus.target_seed == cfg.corpus.seed + 1


def test_unknown_key_names_its_path():
    with pytest.raises(ConfigError, match='distill.margin'):
        config_from_dict({'distill': {'margin': 0.3}})
    with pytest.raises(ConfigError, match='unknown_section'):
        config_from_dict({'unknown_section': {}})


def test_wrong_types_are_rejected():
    with pytest.raises(ConfigError, match='train.lr'):
        config_from_dict({'train': {'lr': 'fast'}})
    with pytest.raises(ConfigError, match='student_model.d'):
        config_from_dict({'student_model': {'d': 64.5}})
    with pytest.raises(ConfigError):
        config_from_dict({'distill': 'ccd'})


def test_optional_fields_are_type_checked():
    with pytest.raises(ConfigError, match='distill.common_dim'):
        config_from_dict({'distill': {'common_dim': 'wide'}})
    with pytest.raises(ConfigError, match='distill.common_dim'):
        config_from_dict({'distill': {'common_dim': 8.5}})
    assert config_from_dict({'distill': {'common_dim': 32}}).distill.common_dim == 32
    assert config_from_dict({'distill': {'common_dim': None}}).distill.common_dim is None


def test_ints_are_accepted_for_floats():
    cfg = config_from_dict({'distill': {'weight': 5}})
    assert cfg.distill.weight == 5.0
    assert isinstance(cfg.distill.weight, float)


def test_invalid_values_are_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({'distill': {'mode': 'cosine'}})
    with pytest.raises(ConfigError):
        config_from_dict({'seeds': []})
    with pytest.raises(ConfigError):
        config_from_dict({'grammar': {'max_steps': 20}})


def test_json_config(tmp_path):
    path = tmp_path / 'exp.json'
    path.write_text(json.dumps({'seeds': [4], 'distill': {'taps': ['clip', 'output']}}))
    cfg = load_config(str(path))
    assert cfg.seeds == [4]
    assert tuple(cfg.distill.taps) == ('clip', 'output')


def test_unreadable_configs(tmp_path):
    bad = tmp_path / 'bad.yaml'
    bad.write_text('train: [unclosed\n')
    with pytest.raises(ConfigError):
        load_config(str(bad))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'missing.yaml'))


def test_with_seed():
    cfg = config_from_dict({}).with_seed(7)
    assert cfg.seeds == [7]
    assert cfg.train.seed == 7
    assert cfg.corpus.seed == 7


def test_flatten_config():
    flat = flatten_config(config_from_dict({}))
    assert flat['train.lr'] == 1e-4
    assert flat['distill.mode'] == 'ccd'
    assert flat['seeds'] == [0, 1, 2]
    assert flatten_config({'a': {'b': {'c': 1}}, 'd': 2}) == {'a.b.c': 1, 'd': 2}


def test_output_root(monkeypatch):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    assert resolve_output_root(None, 'runs') == 'runs'
    monkeypatch.setenv(OUTPUT_ROOT_ENV, '/tmp/env-root')
    assert resolve_output_root(None, 'runs') == '/tmp/env-root'
    assert resolve_output_root('/tmp/flag', 'runs') == '/tmp/flag'
    monkeypatch.delenv(OUTPUT_ROOT_ENV)
    with pytest.raises(ConfigError):
        resolve_output_root(None, None)
