import os

from ccd_anticipation.errors import ConfigError

OUTPUT_ROOT_ENV = 'CCD_OUTPUT_ROOT'


def check(env, field, optional=False):
    """
    Return ``field`` when it is set, otherwise the value of the environment variable ``env``.
    If neither is available and the value is not optional, raise a ``ConfigError``.
    """

    if field:
        return field

    value = os.environ.get(env)
    if value:
        return value

    if not optional:
        raise ConfigError(f'No {env} found. Store as environment variable or pass as an argument.')

    return None


def resolve_output_root(out=None, default=None):
    """
    Pick the output directory for a command: the ``--out`` flag wins, then ``CCD_OUTPUT_ROOT``,
    then the directory named in the experiment config.

    `Args:`
        out: str
            Value of the ``--out`` flag, if any
        default: str
            The config's ``output_dir``
    `Returns:`
        str
    """

    root = check(OUTPUT_ROOT_ENV, out, optional=True)
    if root:
        return root

    if default:
        return default

    raise ConfigError(f'No output directory: pass --out, set {OUTPUT_ROOT_ENV} or set output_dir '
                      'in the experiment config.')
