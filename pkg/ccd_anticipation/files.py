import gzip
import io
import os

__all__ = [
    'is_gzip_path',
    'open_text',
    'has_data',
    'ensure_directory',
    'extract_file_name',
    ]


def is_gzip_path(path):
    return str(path)[-3:] == '.gz'


def open_text(path, mode='r'):
    """
    Open a text file for reading or writing, transparently (de)compressing paths that end in
    ``.gz``. Text is always utf-8 with ``\\n`` line endings so written artifacts are byte-stable
    across platforms.

    `Args:`
        path: str
            The file path
        mode: str
            ``r``, ``w`` or ``a``
    `Returns:`
        file object
    """

    if is_gzip_path(path):
        # mtime=0 keeps the gzip header free of timestamps.
        raw = gzip.GzipFile(filename=str(path), mode=mode + 'b', mtime=0)
        return io.TextIOWrapper(raw, encoding='utf-8', newline='\n')

    return open(path, mode, encoding='utf-8', newline='\n')


def has_data(file_path):
    """
    Check if a file has any data in it.

    `Args:`
        file_path: str
            The file path.
    `Returns:`
        boolean
            ``True`` if data in the file and ``False`` if not.
    """

    return os.stat(file_path).st_size > 0


def ensure_directory(path):
    """
    Create a directory (and its parents) if it does not exist yet.

    `Returns:`
        str
            The directory path
    """

    os.makedirs(path, exist_ok=True)
    return str(path)


def extract_file_name(file_path=None, include_suffix=True):
    """
    Extract the file name from a file path string.

    file_path: str
        The file path
    include_suffix: boolean
        If True, includes full file name with suffix. If False returns the
        file name without the suffix (e.g. "corpus.jsonl" vs. "corpus").
    """

    if not file_path:
        return None

    name = os.path.basename(str(file_path))

    if include_suffix:
        return name

    return name.split('.')[0]
