"""
Experiment configuration.

One file (YAML or JSON) describes a whole experiment. Every section maps onto a dataclass; the
file is checked against those dataclasses before any work starts, and unknown keys or values of
the wrong type are rejected with the dotted path of the offending key.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import simplejson as json
import yaml

from ccd_anticipation import files
from ccd_anticipation.distill import ALL_TAPS, DistillConfig
from ccd_anticipation.errors import ConfigError
from ccd_anticipation.frames import NoiseConfig
from ccd_anticipation.grammar import GrammarConfig
from ccd_anticipation.model import ModelConfig
from ccd_anticipation.train import TrainConfig
from ccd_anticipation.vocab import N_RESERVED

logger = logging.getLogger(__name__)

# Tap subsets of the tap-position ablation, in reporting order.
TAP_SUBSETS = (
    (),
    ('clip',),
    ('dec',),
    ('temporal',),
    ('output',),
    ('clip', 'dec'),
    ('temporal', 'output'),
    ALL_TAPS,
)


@dataclass
class CorpusSizes:
    """
    `Args:`
        seed: int
            Seed of the pretraining corpus; the target corpus uses ``seed + 1``
        pretrain_samples: int
        target_samples: int
        pretrain_with_frames: bool
            The pretraining corpus is text-only unless set
    """

    seed: int = 0
    pretrain_samples: int = 2000
    target_samples: int = 240
    pretrain_with_frames: bool = False

    @property
    def target_seed(self):
        return self.seed + 1

    def validate(self):
        if self.pretrain_samples < 10 or self.target_samples < 10:
            raise ConfigError('corpora need at least 10 samples')
        return self


@dataclass
class AblationConfig:
    """
    `Args:`
        baselines: list of str
            Distillation baselines reported next to CCD
        tap_ablation: bool
        dim_ablation: bool
        dims: list of int
            Student widths of the dimension ablation; the first must equal the teacher's
    """

    baselines: list = field(default_factory=lambda: ['logits_kl', 'feature_l2'])
    tap_ablation: bool = True
    dim_ablation: bool = True
    dims: list = field(default_factory=lambda: [768, 192])

    def validate(self):
        unknown = set(self.baselines) - {'logits_kl', 'feature_l2'}
        if unknown:
            raise ConfigError(f'Unknown baselines {sorted(unknown)}')
        if self.dim_ablation and (len(self.dims) != 2 or min(self.dims) < 1):
            raise ConfigError('dims must hold two positive widths')
        return self


@dataclass
class ExperimentConfig:
    corpus: CorpusSizes = field(default_factory=CorpusSizes)
    grammar: GrammarConfig = field(default_factory=GrammarConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    teacher_model: ModelConfig = field(default_factory=lambda: ModelConfig(modality='text'))
    student_model: ModelConfig = field(default_factory=ModelConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    output_dir: str = 'runs'

    def validate(self):
        self.corpus.validate()
        self.grammar.validate()
        self.noise.validate()
        for name in ('teacher_model', 'student_model'):
            # Vocabulary size and inventory are bound from data; check the rest now.
            getattr(self, name).bind(vocab_size=N_RESERVED + 1, n_ingredients=1).validate()
        self.distill.validate()
        self.train.validate()
        self.ablation.validate()
        if not self.seeds or not all(isinstance(s, int) and not isinstance(s, bool)
                                     for s in self.seeds):
            raise ConfigError('seeds must be a non-empty list of integers')
        if self.grammar.max_steps > min(self.teacher_model.max_steps,
                                        self.student_model.max_steps):
            raise ConfigError('grammar.max_steps exceeds the models\' max_steps')
        return self

    def with_seed(self, seed):
        """A copy whose training and corpus seeds are overridden."""
        return dataclasses.replace(
            self, seeds=[seed], train=dataclasses.replace(self.train, seed=seed),
            corpus=dataclasses.replace(self.corpus, seed=seed))

    def to_dict(self):
        return _to_dict(self)


def _to_dict(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _to_dict(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, (list, tuple)):
        return [_to_dict(v) for v in value]
    if isinstance(value, dict):
        return {k: _to_dict(v) for k, v in value.items()}
    return value


def _default(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return None


def _check_type(value, default, path, declared=None):
    if default is None:
        # Optional fields declare their type in the field metadata.
        if value is None or declared is None:
            return value
        default = declared()
    if value is None:
        raise ConfigError(f'{path} may not be null')
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, (list, tuple)):
        ok = isinstance(value, (list, tuple))
    elif isinstance(default, dict):
        ok = isinstance(value, dict)
    else:
        ok = True
    if not ok:
        raise ConfigError(f'{path} must be of type {type(default).__name__}, got '
                          f'{type(value).__name__}')
    return value


def _build(cls, data, path=''):
    if not isinstance(data, dict):
        raise ConfigError(f'{path or "config"} must be a mapping')

    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = f'{path}.{unknown[0]}' if path else unknown[0]
        raise ConfigError(f'Unknown config key {where}')

    kwargs = {}
    for name, value in data.items():
        key = f'{path}.{name}' if path else name
        default = _default(fields[name])
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, key)
        else:
            kwargs[name] = _check_type(value, default, key, fields[name].metadata.get('type'))
    return cls(**kwargs)


def config_from_dict(data):
    """
    Build and validate an `ExperimentConfig` from nested dicts. Missing keys take their
    defaults; a ``teacher_model`` section without ``modality`` stays a text model.
    """

    data = dict(data or {})
    teacher = dict(data.get('teacher_model') or {})
    teacher.setdefault('modality', 'text')
    data['teacher_model'] = teacher
    return _build(ExperimentConfig, data).validate()


def load_config(path):
    """
    Read an experiment config from a ``.yaml``/``.yml`` or ``.json`` file.

    `Args:`
        path: str
    `Returns:`
        `ExperimentConfig`
    """

    path = str(path)
    try:
        with files.open_text(path, 'r') as f:
            if path.endswith(('.yaml', '.yml')):
                data = yaml.safe_load(f)
            else:
                data = json.load(f)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f'Could not parse config {path}: {e}')
    except OSError as e:
        raise ConfigError(f'Could not read config {path}: {e}')

    cfg = config_from_dict(data)
    logger.info(f'Loaded experiment config from {path}')
    return cfg


def flatten_config(config, parent_key='', sep='.'):
    """
    Flatten a nested config (dataclass or dict) into dotted keys, e.g. ``train.lr``. Lists are
    kept as values.
    """

    if dataclasses.is_dataclass(config):
        config = _to_dict(config)

    flat = {}
    for k, v in config.items():
        new_key = f'{parent_key}{sep}{k}' if parent_key else k
        if isinstance(v, dict):
            flat.update(flatten_config(v, new_key, sep))
        else:
            flat[new_key] = v
    return flat
