import pytest

from ccd_anticipation.table import Table

ROWS = [
    {'epoch': 1, 'role': 'student', 'loss': 2.5, 'val_bleu4': None},
    {'epoch': 2, 'role': 'student', 'loss': 1.25, 'val_bleu4': 0.125},
]


def test_table_from_dicts():
    table = Table(ROWS)
    assert table.num_rows == 2
    assert table.columns == ['epoch', 'role', 'loss', 'val_bleu4']
    assert table.column_data('loss') == [2.5, 1.25]
    assert table.to_dicts()[1]['val_bleu4'] == 0.125
    with pytest.raises(ValueError):
        table.column_data('missing')


def test_table_from_lists_and_empty():
    table = Table([['a', 'b'], [1, 2], [3, 4]])
    assert table.columns == ['a', 'b']
    assert table.column_data('b') == [2, 4]
    assert not Table()
    assert Table().columns == []


def test_rows_missing_keys_are_filled():
    table = Table([{'a': 1}, {'a': 2, 'b': 3}])
    assert table.columns == ['a', 'b']
    assert table.column_data('b') == [None, 3]


def test_table_is_a_snapshot():
    rows = [dict(r) for r in ROWS]
    table = Table(rows)
    rows[0]['loss'] = 99.0
    assert table.column_data('loss') == [2.5, 1.25]


def test_csv_round_trip(tmp_path):
    path = Table(ROWS).to_csv(str(tmp_path / 'log.csv'))
    with open(path) as f:
        assert f.readline() == 'epoch,role,loss,val_bleu4\n'
        assert f.readline() == '1,student,2.500000,\n'

    loaded = Table.from_csv(path).convert_numeric('epoch', 'loss')
    assert loaded.column_data('epoch') == [1, 2]
    assert loaded.column_data('loss') == [2.5, 1.25]


def test_from_csv_rejects_empty(tmp_path):
    path = tmp_path / 'empty.csv'
    path.write_text('')
    with pytest.raises(ValueError):
        Table.from_csv(str(path))


def test_markdown():
    text = Table(ROWS).to_markdown(2)
    lines = text.splitlines()
    assert lines[0] == '| epoch | role | loss | val_bleu4 |'
    assert lines[2] == '| 1 | student | 2.50 |  |'
