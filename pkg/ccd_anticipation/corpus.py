"""
Paired text/frame procedure corpora: generation, validation and the line-delimited file format.

File layout (optionally gzip-compressed when the path ends in ``.gz``)::

    {"schema_version": 1, "vocab": [...], "seed": 7, "grammar": {...}, "noise": {...},
     "modalities": ["text", "visual"]}
    {"id": 0, "split": "train", "ingredients": [3, 17], "steps": [{"text": [..], "frames": [[..]]}]}
    ...

``vocab`` is the corpus lexicon; step texts are ids into it and end with EOS. Text-only corpora
(teacher pretraining) omit ``frames``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import simplejson as json

from ccd_anticipation import files
from ccd_anticipation.errors import ConfigError, DataError, ParseError, VersionError
from ccd_anticipation.frames import NoiseConfig, frame_projection, synthesize_frames
from ccd_anticipation.grammar import GrammarConfig, realize_procedure
from ccd_anticipation.vocab import EOS, N_RESERVED, RESERVED_TOKENS, Vocab

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MAX_CONTENT_TOKENS = 24
MIN_SAMPLES = 10
SPLITS = ('train', 'val', 'test')
MODALITIES = ('text', 'visual')


@dataclass
class StepRecord:
    text: tuple
    frames: np.ndarray = None

    def __eq__(self, other):
        if not isinstance(other, StepRecord):
            return NotImplemented
        if tuple(self.text) != tuple(other.text):
            return False
        if self.frames is None or other.frames is None:
            return self.frames is None and other.frames is None
        return self.frames.shape == other.frames.shape and np.array_equal(self.frames, other.frames)


@dataclass
class ProcedureSample:
    id: int
    ingredients: tuple
    steps: list = field(default_factory=list)

    @property
    def n_steps(self):
        return len(self.steps)


@dataclass
class CorpusSplit:
    """
    A corpus with its train/val/test splits.

    `Args:`
        train / val / test: list of ProcedureSample
        seed: int
            Generation seed (None for ingested corpora)
        grammar: dict
            Generator settings; its ``version`` is the grammar version tag
        vocab: Vocab
            Lexicon the step texts are written in
        noise: dict
            Frame synthesis settings (empty for text-only or ingested corpora)
        modalities: tuple
            Which inputs the corpus can feed to a model: ``text``, ``visual`` or both
    """

    train: list
    val: list
    test: list
    seed: int
    grammar: dict
    vocab: Vocab
    noise: dict = field(default_factory=dict)
    modalities: tuple = MODALITIES

    def split(self, name):
        if name not in SPLITS:
            raise ConfigError(f'Unknown split {name}; must be one of {SPLITS}')
        return getattr(self, name)

    @property
    def samples(self):
        return self.train + self.val + self.test

    @property
    def frame_dim(self):
        for sample in self.samples:
            for step in sample.steps:
                if step.frames is not None:
                    return step.frames.shape[1]
        return None

    @property
    def max_steps(self):
        return max(s.n_steps for s in self.samples)

    def __eq__(self, other):
        if not isinstance(other, CorpusSplit):
            return NotImplemented
        return (self.train == other.train and self.val == other.val and self.test == other.test
                and self.seed == other.seed and self.grammar == other.grammar
                and self.vocab == other.vocab and self.noise == other.noise
                and tuple(self.modalities) == tuple(other.modalities))


def step_seed(corpus_seed, sample_id, step_index):
    """Seed of the frame synthesis of one step."""
    state = np.random.SeedSequence([int(corpus_seed), int(sample_id), int(step_index)])
    return int(state.generate_state(1)[0])


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def validate_sample(sample, vocab, n_ingredients=None, step_bounds=None, frame_dim=None):
    """
    Check the invariants of one sample; raise ``DataError`` naming the first violation.
    """

    if step_bounds and not step_bounds[0] <= sample.n_steps <= step_bounds[1]:
        raise DataError(f'sample {sample.id}: {sample.n_steps} steps outside {step_bounds}')
    if not sample.steps:
        raise DataError(f'sample {sample.id}: no steps')
    for i in sample.ingredients:
        if not _is_int(i):
            raise DataError(f'sample {sample.id}: ingredient id {i!r} is not an integer')
        if i < 0 or (n_ingredients is not None and i >= n_ingredients):
            raise DataError(f'sample {sample.id}: ingredient id {i} out of range')

    for t, step in enumerate(sample.steps, start=1):
        text = step.text
        if len(text) < 2 or text[-1] != EOS:
            raise DataError(f'sample {sample.id} step {t}: text must be non-empty and end with EOS')
        if len(text) - 1 > MAX_CONTENT_TOKENS:
            raise DataError(f'sample {sample.id} step {t}: more than {MAX_CONTENT_TOKENS} tokens')
        for token in text[:-1]:
            if not N_RESERVED <= token < len(vocab):
                raise DataError(f'sample {sample.id} step {t}: token id {token} not in vocabulary')
        if step.frames is not None:
            frames = step.frames
            if frames.ndim != 2 or frames.shape[0] < 1:
                raise DataError(f'sample {sample.id} step {t}: frames must be a non-empty matrix')
            if frame_dim is not None and frames.shape[1] != frame_dim:
                raise DataError(f'sample {sample.id} step {t}: frame width {frames.shape[1]} '
                                f'!= {frame_dim}')
            if not np.isfinite(frames).all():
                raise DataError(f'sample {sample.id} step {t}: non-finite frame values')


def generate_corpus(seed, n_samples, grammar_cfg=None, noise_cfg=None, with_frames=True):
    """
    Generate a synthetic procedure corpus.

    `Args:`
        seed: int
        n_samples: int
            Total samples over all splits (>= 10)
        grammar_cfg: GrammarConfig
        noise_cfg: NoiseConfig
            Frame synthesis settings; ignored when ``with_frames`` is False
        with_frames: bool
            Text-only corpora (teacher pretraining) skip frame synthesis
    `Returns:`
        `CorpusSplit`
    """

    grammar_cfg = (grammar_cfg or GrammarConfig()).validate()
    noise_cfg = (noise_cfg or NoiseConfig()).validate()

    if n_samples < MIN_SAMPLES:
        raise ConfigError(f'n_samples must be at least {MIN_SAMPLES}, got {n_samples}')

    texts = []
    ingredient_sets = []
    for sample_id in range(n_samples):
        rng = np.random.default_rng([int(seed), sample_id])
        n_ing = int(rng.integers(grammar_cfg.min_ingredients, grammar_cfg.max_ingredients + 1))
        ingredients = sorted(int(i) for i in rng.choice(grammar_cfg.n_ingredients, n_ing,
                                                        replace=False))
        n_steps = int(rng.integers(grammar_cfg.min_steps, grammar_cfg.max_steps + 1))
        texts.append(realize_procedure(ingredients, n_steps, grammar_cfg, rng))
        ingredient_sets.append(tuple(ingredients))

    lexicon = Vocab.from_tokens(sorted({w for steps in texts for words in steps for w in words}))
    projection = frame_projection(seed, len(lexicon), noise_cfg.frame_dim) if with_frames else None

    samples = []
    for sample_id, (ingredients, steps) in enumerate(zip(ingredient_sets, texts)):
        records = []
        for t, words in enumerate(steps, start=1):
            text = tuple(lexicon.encode(words))
            frames = None
            if with_frames:
                frames = synthesize_frames(text, step_seed(seed, sample_id, t), noise_cfg,
                                           projection)
            records.append(StepRecord(text=text, frames=frames))
        samples.append(ProcedureSample(id=sample_id, ingredients=ingredients, steps=records))

    n_val = max(1, int(round(n_samples * grammar_cfg.val_fraction)))
    n_test = max(1, int(round(n_samples * grammar_cfg.test_fraction)))
    n_train = n_samples - n_val - n_test

    corpus = CorpusSplit(
        train=samples[:n_train],
        val=samples[n_train:n_train + n_val],
        test=samples[n_train + n_val:],
        seed=int(seed),
        grammar=grammar_cfg.to_dict(),
        vocab=lexicon,
        noise=noise_cfg.to_dict() if with_frames else {},
        modalities=MODALITIES if with_frames else ('text',),
    )

    logger.info(f'Generated corpus seed={seed}: {n_train}/{n_val}/{n_test} samples, '
                f'lexicon of {len(lexicon)} tokens')
    return corpus


def _sample_to_record(sample, split):
    steps = []
    for step in sample.steps:
        record = {'text': [int(t) for t in step.text]}
        if step.frames is not None:
            record['frames'] = step.frames.tolist()
        steps.append(record)
    return {'id': int(sample.id), 'split': split,
            'ingredients': [int(i) for i in sample.ingredients], 'steps': steps}


def save_corpus(corpus, path):
    """
    Write a corpus in the line-delimited format described in the module docstring.

    `Returns:`
        str
            The path of the new file
    """

    header = {
        'schema_version': SCHEMA_VERSION,
        'vocab': corpus.vocab.tokens,
        'seed': corpus.seed,
        'grammar': corpus.grammar,
        'noise': corpus.noise,
        'modalities': list(corpus.modalities),
    }

    with files.open_text(path, 'w') as f:
        f.write(json.dumps(header, sort_keys=True) + '\n')
        for split in SPLITS:
            for sample in corpus.split(split):
                f.write(json.dumps(_sample_to_record(sample, split)) + '\n')

    logger.info(f'Saved corpus with {len(corpus.samples)} samples to {path}')
    return str(path)


def _parse_step(raw, line_number, vocab, frame_dim):
    if not isinstance(raw, dict) or 'text' not in raw:
        raise ParseError(line_number, 'step is missing "text"')

    text = raw['text']
    if not isinstance(text, list):
        raise ParseError(line_number, 'step "text" must be a list')
    if text and all(isinstance(t, str) for t in text):
        # Externally produced corpora may carry words instead of ids.
        text = vocab.encode([t for t in text if t != RESERVED_TOKENS[EOS]])
    elif not all(_is_int(t) for t in text):
        raise ParseError(line_number, 'step "text" must be a list of ids or of words')

    frames = None
    if raw.get('frames') is not None:
        try:
            frames = np.asarray(raw['frames'], dtype=np.float64)
        except (TypeError, ValueError):
            raise ParseError(line_number, 'step "frames" must be a matrix of numbers')
        if frames.ndim != 2 or (frame_dim is not None and frames.shape[1] != frame_dim):
            raise ParseError(line_number, f'step "frames" has shape {frames.shape}')

    return StepRecord(text=tuple(text), frames=frames)


def _read_records(path):
    if not files.has_data(path):
        raise DataError(f'Corpus file {path} is empty')

    with files.open_text(path, 'r') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield line_number, json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(line_number, f'invalid JSON: {e}')


def _load(path, vocab=None, modalities=None):
    records = _read_records(path)

    try:
        line_number, header = next(records)
    except StopIteration:
        raise DataError(f'Corpus file {path} is empty')

    if not isinstance(header, dict) or 'schema_version' not in header:
        raise ParseError(line_number, 'missing header with "schema_version"')
    if header['schema_version'] != SCHEMA_VERSION:
        raise VersionError(f'Corpus schema version {header["schema_version"]} is not '
                           f'{SCHEMA_VERSION}')

    if vocab is None:
        if 'vocab' not in header:
            raise ParseError(line_number, 'header is missing "vocab"')
        vocab = Vocab(header['vocab'])

    modalities = tuple(modalities or header.get('modalities', MODALITIES))
    unknown = set(modalities) - set(MODALITIES)
    if unknown:
        raise ParseError(line_number, f'unknown modalities {sorted(unknown)}')

    grammar = header.get('grammar') or {}
    if not isinstance(grammar, dict):
        raise ParseError(line_number, 'header "grammar" must be an object')
    n_ingredients = grammar.get('n_ingredients')
    if n_ingredients is not None and not _is_int(n_ingredients):
        raise ParseError(line_number, 'header "grammar.n_ingredients" must be an integer')

    splits = {name: [] for name in SPLITS}
    frame_dim = None
    for line_number, record in records:
        if not isinstance(record, dict):
            raise ParseError(line_number, 'record must be an object')
        for key in ('id', 'ingredients', 'steps'):
            if key not in record:
                raise ParseError(line_number, f'record is missing "{key}"')
        split = record.get('split', 'train')
        if split not in splits:
            raise ParseError(line_number, f'unknown split {split!r}')
        if not _is_int(record['id']):
            raise ParseError(line_number, '"id" must be an integer')
        ingredients = record['ingredients']
        if not isinstance(ingredients, list) or not all(_is_int(i) for i in ingredients):
            raise ParseError(line_number, '"ingredients" must be a list of integers')
        if not isinstance(record['steps'], list) or not record['steps']:
            raise ParseError(line_number, '"steps" must be a non-empty list')

        steps = [_parse_step(s, line_number, vocab, frame_dim) for s in record['steps']]
        for step in steps:
            if step.frames is not None and frame_dim is None:
                frame_dim = step.frames.shape[1]

        sample = ProcedureSample(id=record['id'], ingredients=tuple(ingredients), steps=steps)
        try:
            validate_sample(sample, vocab, n_ingredients=n_ingredients, frame_dim=frame_dim)
        except DataError as e:
            raise ParseError(line_number, str(e))
        if 'visual' in modalities and any(s.frames is None for s in steps):
            raise ParseError(line_number, 'visual corpus record is missing "frames"')
        splits[split].append(sample)

    ids = [s.id for split in SPLITS for s in splits[split]]
    if len(set(ids)) != len(ids):
        raise DataError(f'Corpus file {path} has duplicate sample ids')
    if not ids:
        raise DataError(f'Corpus file {path} holds no samples')

    return CorpusSplit(train=splits['train'], val=splits['val'], test=splits['test'],
                       seed=header.get('seed'), grammar=grammar,
                       vocab=vocab, noise=header.get('noise') or {}, modalities=modalities)


def load_corpus(path):
    """
    Read a corpus written by ``save_corpus``.

    `Args:`
        path: str
    `Returns:`
        `CorpusSplit`
    """

    corpus = _load(path)
    logger.info(f'Loaded corpus with {len(corpus.samples)} samples from {path}')
    return corpus


def load_external_corpus(path, vocab=None, frame_only=False):
    """
    Ingest a corpus with externally produced frame features (one feature matrix per annotated
    step). Step texts may be ids into the header vocabulary or plain words; words are encoded
    with ``vocab`` (or the header vocabulary). Frame counts may differ between steps.

    `Args:`
        path: str
        vocab: Vocab
            Vocabulary for word-form texts; defaults to the header's ``vocab``
        frame_only: bool
            Mark the corpus as visual-only so text models are refused at evaluation
    `Returns:`
        `CorpusSplit`
    """

    modalities = ('visual',) if frame_only else None
    corpus = _load(path, vocab=vocab, modalities=modalities)
    if 'visual' not in corpus.modalities:
        raise DataError(f'{path} does not carry frame features')
    for sample in corpus.samples:
        for step in sample.steps:
            if step.frames is None or not all(math.isfinite(v) for v in step.frames.flat):
                raise DataError(f'sample {sample.id}: missing or non-finite frames')
    logger.info(f'Ingested {len(corpus.samples)} samples with external frames from {path}')
    return corpus
