import copy
import os

import pytest
import yaml

from ccd_anticipation.checkpoint import save_checkpoint
from ccd_anticipation.cli import main
from ccd_anticipation.model import ModelConfig, build_model
from ccd_anticipation.table import Table
from ccd_anticipation.vocab import Vocab

DATA_FILES = ('pretrain.jsonl.gz', 'target.jsonl.gz', 'vocab.json')


def write_config(path, data):
    with open(path, 'w') as f:
        yaml.safe_dump(data, f)
    return str(path)


@pytest.fixture
def config_path(tmp_path, tiny_experiment):
    return write_config(tmp_path / 'exp.yaml', tiny_experiment)


@pytest.fixture
def out(tmp_path, config_path):
    root = str(tmp_path / 'out')
    assert main(['gen-data', '--config', config_path, '--out', root]) == 0
    return root


def test_gen_data_writes_corpora(out):
    for name in DATA_FILES:
        assert os.path.getsize(os.path.join(out, 'data', name)) > 0


def test_gen_data_is_byte_identical(out, config_path, tmp_path):
    again = str(tmp_path / 'again')
    assert main(['gen-data', '--config', config_path, '--out', again]) == 0
    for name in DATA_FILES:
        with open(os.path.join(out, 'data', name), 'rb') as a, \
                open(os.path.join(again, 'data', name), 'rb') as b:
            assert a.read() == b.read()


def test_output_root_from_environment(config_path, tmp_path, monkeypatch):
    root = tmp_path / 'from-env'
    monkeypatch.setenv('CCD_OUTPUT_ROOT', str(root))
    assert main(['gen-data', '--config', config_path]) == 0
    assert (root / 'data' / 'vocab.json').exists()


def test_bad_config_exits_2(tmp_path, tiny_experiment):
    data = copy.deepcopy(tiny_experiment)
    data['distill']['margin'] = 0.2
    path = write_config(tmp_path / 'bad.yaml', data)
    assert main(['gen-data', '--config', path, '--out', str(tmp_path)]) == 2

    data = copy.deepcopy(tiny_experiment)
    data['distill']['common_dim'] = 'wide'
    path = write_config(tmp_path / 'typed.yaml', data)
    assert main(['gen-data', '--config', path, '--out', str(tmp_path)]) == 2

    broken = tmp_path / 'broken.yaml'
    broken.write_text('seeds: [0,\n')
    assert main(['gen-data', '--config', str(broken), '--out', str(tmp_path)]) == 2


def test_usage_errors_exit_2(config_path):
    assert main([]) == 2
    assert main(['train', '--config', config_path]) == 2
    assert main(['train', '--config', config_path, '--role', 'critic']) == 2


def test_train_without_data_exits_2(config_path, tmp_path):
    assert main(['train', '--config', config_path, '--out', str(tmp_path / 'empty'),
                 '--role', 'student']) == 2


def test_distilled_student_needs_teacher(out, config_path):
    assert main(['train', '--config', config_path, '--out', out, '--role', 'student']) == 2


def test_visual_alone_student(out, tmp_path, tiny_experiment):
    data = copy.deepcopy(tiny_experiment)
    data['distill'] = {'mode': 'none', 'taps': []}
    path = write_config(tmp_path / 'alone.yaml', data)
    assert main(['train', '--config', path, '--out', out, '--role', 'student']) == 0

    name = 'student-none-none-seed0'
    checkpoint = os.path.join(out, 'checkpoints', f'{name}.pt')
    assert os.path.exists(checkpoint)
    assert os.path.exists(os.path.join(out, 'logs', f'{name}.jsonl'))

    assert main(['eval', '--config', path, '--out', out, '--checkpoint', checkpoint]) == 0
    assert os.path.exists(os.path.join(out, 'eval', f'{name}-test', 'scores.csv'))


def test_teacher_pipeline(out, config_path):
    assert main(['train', '--config', config_path, '--out', out,
                 '--role', 'teacher_pretrain']) == 0
    assert main(['train', '--config', config_path, '--out', out,
                 '--role', 'teacher_finetune']) == 0
    teacher = os.path.join(out, 'checkpoints', 'teacher_finetune-seed0.pt')
    assert main(['train', '--config', config_path, '--out', out, '--role', 'student',
                 '--teacher', teacher]) == 0
    assert os.path.exists(os.path.join(out, 'checkpoints',
                                       'student-ccd-clip+dec+temporal+output-seed0.pt'))


def test_oracle_eval_scores_100(out, config_path):
    assert main(['eval', '--config', config_path, '--out', out, '--oracle']) == 0
    scores = Table.from_csv(os.path.join(out, 'eval', 'oracle-test', 'scores.csv'))
    row = scores.convert_numeric().to_dicts()[0]
    assert row['bleu1_mean'] == 100.0
    assert row['bleu4_mean'] == 100.0


def test_eval_rejects_foreign_vocab(out, config_path, tmp_path):
    cfg = ModelConfig(d=16, heads=2, temporal_layers=1, output_layers=1, ff_mult=2,
                      dropout=0.0, max_steps=8)
    model = build_model(cfg, Vocab.from_tokens(['elsewhere', 'entirely']), 12, 'visual',
                        frame_dim=8)
    path = save_checkpoint(model, str(tmp_path / 'foreign.pt'))
    assert main(['eval', '--config', config_path, '--out', out, '--checkpoint', path]) == 2


def test_eval_needs_a_model(out, config_path):
    assert main(['eval', '--config', config_path, '--out', out]) == 2


@pytest.mark.slow
def test_reproduce_bundle(config_path, tmp_path):
    root = str(tmp_path / 'repro')
    assert main(['reproduce', '--config', config_path, '--out', root]) == 0
    report = os.path.join(root, 'report')
    for name in ('methods.csv', 'taps.csv', 'dims.csv', 'scores.csv', 'per_step_bleu.csv',
                 'per_step_bleu.svg', 'qualitative.txt', 'summary.md'):
        assert os.path.exists(os.path.join(report, name))
    assert os.listdir(os.path.join(report, 'logs'))
