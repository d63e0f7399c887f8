import os

import pytest

from ccd_anticipation.errors import InputError
from ccd_anticipation.evaluate import EvalReport
from ccd_anticipation.report import emit_report, per_step_table, score_table
from ccd_anticipation.table import Table


def make_report(bleu1, bleu4, steps):
    samples = [{'id': 0, 'ingredients': [1, 2], 'step': t + 1, 'reference': 'chop the onion',
                'generated': 'chop the garlic'} for t in range(steps)]
    return EvalReport(bleu1=bleu1, bleu4=bleu4, per_step_bleu1=[bleu1] * steps,
                      per_step_bleu4=[bleu4] * steps, per_step_count=[3] * steps,
                      repetition_rate=0.25, samples=samples, provenance={'seed': 0})


@pytest.fixture
def reports():
    return {
        'visual-alone': [make_report(0.5, 0.1, 4), make_report(0.7, 0.3, 4)],
        'CCD': [make_report(0.6, 0.2, 5), make_report(0.6, 0.2, 4)],
    }


def test_score_table(reports):
    rows = {r['method']: r for r in score_table(reports)}
    assert rows['visual-alone']['bleu1_mean'] == pytest.approx(60.0)
    assert rows['visual-alone']['bleu4_std'] == pytest.approx(10.0)
    assert rows['CCD']['bleu4_std'] == pytest.approx(0.0)
    assert rows['CCD']['n_seeds'] == 2


def test_per_step_table(reports):
    table = per_step_table(reports)
    ccd = [r for r in table if r['method'] == 'CCD']
    assert [r['step'] for r in ccd] == [1, 2, 3, 4, 5]
    assert ccd[-1]['bleu4'] == pytest.approx(20.0)
    alone = [r for r in table if r['method'] == 'visual-alone']
    assert alone[0]['bleu1'] == pytest.approx(60.0)


def test_emit_report_writes_bundle(reports, tmp_path):
    tables = {'methods': Table([{'row': 8, 'method': 'visual-alone', 'bleu4_mean': 20.0}])}
    out = tmp_path / 'report'
    written = emit_report(reports, str(out), tables=tables, provenance={'train.lr': 0.001})

    for name in ('methods.csv', 'scores.csv', 'per_step_bleu.csv', 'per_step_bleu.svg',
                 'qualitative.txt', 'summary.md'):
        assert str(out / name) in written
        assert os.path.getsize(out / name) > 0

    summary = (out / 'summary.md').read_text()
    assert '`train.lr`' in summary
    assert '| method |' in summary or '| row |' in summary
    assert 'generated: chop the garlic' in (out / 'qualitative.txt').read_text()


def test_emit_report_is_byte_stable(reports, tmp_path):
    emit_report(reports, str(tmp_path / 'a'))
    emit_report(reports, str(tmp_path / 'b'))
    for name in ('scores.csv', 'per_step_bleu.csv', 'qualitative.txt', 'summary.md',
                 'per_step_bleu.svg'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_csv_reads_back(reports, tmp_path):
    emit_report(reports, str(tmp_path))
    table = Table.from_csv(str(tmp_path / 'scores.csv')).convert_numeric()
    rows = {r['method']: r for r in table}
    assert rows['CCD']['bleu1_mean'] == pytest.approx(60.0)
    assert rows['CCD']['n_seeds'] == 2


def test_emit_report_errors(reports, tmp_path):
    with pytest.raises(InputError):
        emit_report({}, str(tmp_path))
    with pytest.raises(InputError):
        emit_report({'CCD': []}, str(tmp_path))

    blocker = tmp_path / 'blocker'
    blocker.write_text('')
    with pytest.raises(OSError):
        emit_report(reports, str(blocker / 'report'))
