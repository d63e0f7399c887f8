import logging

import petl

from ccd_anticipation import files

logger = logging.getLogger(__name__)

# Decimal places used when floats are written to CSV or markdown. Fixed so identical results
# produce byte-identical files.
FLOAT_DIGITS = 6


def _format_float(value, digits):
    if isinstance(value, float):
        return f'{value:.{digits}f}'
    return value


class Table(object):
    """
    A results table (training logs, evaluation scores, ablation rows) backed by petl. Accepts
    one of the following:

    - A list of dicts
    - A list of lists, with list[0] holding field names, and the other lists holding data
    - A petl table

    `Args:`
        lst: list
            See above for accepted list formats
    """

    def __init__(self, lst=None):

        lst = [] if lst is None else lst

        if isinstance(lst, (list, tuple)):
            if not len(lst):
                self.table = petl.fromdicts([])
            elif isinstance(lst[0], dict):
                # Column order follows first appearance of each key, not petl's sampling.
                header = list(dict.fromkeys(k for row in lst for k in row))
                # Materialize so later mutation of the dicts does not leak into the table.
                self.table = petl.wrap(petl.tupleoftuples(petl.fromdicts(lst, header=header)))
            elif isinstance(lst[0], (list, tuple)):
                self.table = petl.wrap([tuple(row) for row in lst])
            else:
                raise ValueError('Could not create Table')
        else:
            self.table = lst

    def __repr__(self):
        return repr(petl.dicts(self.table))

    def __iter__(self):
        return iter(petl.dicts(self.table))

    def __len__(self):
        return self.num_rows

    def __bool__(self):
        return self.num_rows > 0

    def __eq__(self, other):
        if not isinstance(other, Table):
            return NotImplemented
        return self.columns == other.columns and self.to_dicts() == other.to_dicts()

    @property
    def num_rows(self):
        """
        `Returns:`
            int
                Number of rows in the table
        """
        return petl.nrows(self.table)

    @property
    def columns(self):
        """
        `Returns:`
            list
                List of the table's column names
        """
        try:
            return list(petl.header(self.table))
        except StopIteration:
            return []

    def column_data(self, column_name):
        """
        Returns the data in the column as a list.

        `Args:`
            column_name: str
                The name of the column
        `Returns`:
            list
        """

        if column_name not in self.columns:
            raise ValueError(f'Column {column_name} not found.')

        return list(petl.values(self.table, column_name))

    def to_dicts(self):
        """
        Output table as a list of dicts.

        `Returns:`
            list
        """

        return list(petl.dicts(self.table))

    def convert_numeric(self, *columns):
        """
        Convert string cells (e.g. after reading a CSV) to ints or floats where they parse.
        """

        columns = columns or tuple(self.columns)
        self.table = petl.convert(self.table, columns, _parse_number)
        return self

    def rounded(self, digits=FLOAT_DIGITS):
        """
        A view of the table with every float formatted to ``digits`` decimals.
        """

        return Table(petl.convertall(self.table, lambda v: _format_float(v, digits)))

    def to_csv(self, local_path, float_digits=FLOAT_DIGITS, **csvargs):
        """
        Outputs table to a CSV. Floats are written with a fixed number of decimals.

        .. warning::
                If a file already exists at the given location, it will be
                overwritten.

        `Args:`
            local_path: str
                The path to write the csv locally. If it ends in ".gz", the file will be
                compressed.
            float_digits: int
                Decimals for float cells
            \\**csvargs: kwargs
                ``csv_writer`` optional arguments
        `Returns:`
            str
                The path of the new file
        """

        petl.tocsv(self.rounded(float_digits).table, source=str(local_path), encoding='utf-8',
                   lineterminator='\n', **csvargs)
        logger.debug(f'Wrote {self.num_rows} rows to {local_path}')
        return str(local_path)

    def to_markdown(self, float_digits=4):
        """
        Render the table as a GitHub-flavoured markdown table.

        `Returns:`
            str
        """

        rows = self.rounded(float_digits).to_dicts()
        header = self.columns
        lines = ['| ' + ' | '.join(header) + ' |', '|' + '|'.join(['---'] * len(header)) + '|']
        for row in rows:
            cells = ('' if row[c] is None else str(row[c]) for c in header)
            lines.append('| ' + ' | '.join(cells) + ' |')
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_csv(cls, local_path, **csvargs):
        """
        Create a ``Table`` from a CSV file. Cells are strings; call ``convert_numeric`` to get
        numbers back.

        `Args:`
            local_path: str
                A csv formatted local path. If it ends in ".gz", the file will be decompressed
                first.
        `Returns:`
            `Table`
        """

        if not files.has_data(local_path):
            raise ValueError('CSV file is empty')

        return cls(petl.wrap(petl.tupleoftuples(petl.fromcsv(str(local_path), encoding='utf-8',
                                                             **csvargs))))


def _parse_number(value):
    if not isinstance(value, str):
        return value
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value
