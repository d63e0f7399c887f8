import os

import pytest

from ccd_anticipation.ablation import ExperimentRunner, run_dim_ablation, run_experiment, \
    run_method_comparison, run_tap_ablation, seed_stats
from ccd_anticipation.cli import generate_data
from ccd_anticipation.config import TAP_SUBSETS, config_from_dict, load_config
from ccd_anticipation.distill import ALL_TAPS, DistillConfig
from ccd_anticipation.evaluate import evaluate_next_step
from ccd_anticipation.train import train_student


@pytest.fixture(scope='module')
def runner(tiny_experiment):
    cfg = config_from_dict(tiny_experiment)
    return ExperimentRunner(cfg, *generate_data(cfg))


def test_seed_stats():
    assert seed_stats([1.0, 2.0, 3.0]) == pytest.approx((2.0, (2 / 3) ** 0.5))
    assert seed_stats([5.0]) == (5.0, 0.0)


def test_method_comparison_rows(runner):
    table = run_method_comparison(runner)
    assert table.column_data('row') == [3, 4, 8, 9, 10, 12]
    assert table.column_data('modality') == ['text', 'text', 'visual', 'visual', 'visual',
                                             'visual']
    assert all(n == 1 for n in table.column_data('n_seeds'))
    assert all(0.0 <= b <= 100.0 for b in table.column_data('bleu4_mean'))


def test_tap_ablation_rows(runner):
    table = run_tap_ablation(runner)
    assert table.column_data('row') == list('abcdefgh')
    assert table.column_data('taps')[0] == 'none'
    assert table.column_data('taps')[-1] == 'clip+dec+temporal+output'
    for row, taps in zip(table, TAP_SUBSETS):
        for kind in ALL_TAPS:
            assert row[kind] == (kind in taps)


def test_no_tap_row_is_visual_alone(runner):
    table = run_tap_ablation(runner, subsets=[()])
    cfg = runner.cfg
    alone = train_student(runner.target_corpus, runner.vocab, cfg.student_model,
                          DistillConfig(mode='none', taps=()), cfg.train)
    report = evaluate_next_step(alone.model, runner.target_corpus, 'test', runner.vocab,
                                cfg.train.eval_batch_size)
    row = table.to_dicts()[0]
    assert row['bleu4_mean'] == report.bleu4 * 100
    assert row['bleu1_mean'] == report.bleu1 * 100


def test_students_are_cached(runner):
    first = runner.student(0, 'ccd', ALL_TAPS)
    assert runner.student(0, 'ccd', list(ALL_TAPS)) is first
    assert runner.student(0, 'ccd', ()) is runner.student(0, 'none')


def test_dim_ablation_rows(runner):
    table = run_dim_ablation(runner)
    assert table.column_data('row') == ['a', 'b', 'c', 'd']
    assert table.column_data('student_d') == [16, 16, 8, 8]
    assert table.column_data('ccd') == [False, True, False, True]
    assert table.column_data('projected') == [False, False, False, True]
    assert set(table.column_data('teacher_d')) == {16}


def test_run_experiment(runner):
    results = run_experiment(runner)
    assert set(results.tables) == {'methods', 'taps', 'dims'}
    assert 'CCD' in results.reports and 'visual-alone' in results.reports
    assert ('teacher_pretrain', 0) in results.logs
    assert ('teacher_target_only', 0) in results.logs


def _desk_runner():
    path = os.path.join(os.path.dirname(__file__), '..', 'configs', 'desk.yaml')
    cfg = load_config(path)
    return ExperimentRunner(cfg, *generate_data(cfg))


@pytest.mark.slow
def test_desk_scale_directions():
    runner = _desk_runner()
    seeds = runner.seeds
    assert len(seeds) >= 3

    target_only = seed_stats([runner.teacher_report(s, 'target_only').bleu4 for s in seeds])[0]
    pretrained = seed_stats([runner.teacher_report(s).bleu4 for s in seeds])[0]
    assert pretrained > target_only

    alone = seed_stats([r.bleu4 for r in runner.method_reports('none', ())])[0]
    ccd = seed_stats([r.bleu4 for r in runner.method_reports('ccd', ALL_TAPS)])[0]
    assert ccd >= alone

    for mode in ('logits_kl', 'feature_l2'):
        assert len(runner.method_reports(mode, ALL_TAPS)) == len(seeds)
