"""
Next-step anticipation evaluation.

For every sample and every target step t, the predictor observes the ingredients and steps
1..t-1 in its own modality and generates step t, which is scored against the ground truth with
corpus BLEU, overall and per step index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

from ccd_anticipation.batching import encode_samples, iterate_batches
from ccd_anticipation.bleu import bleu_1_4
from ccd_anticipation.corpus import MAX_CONTENT_TOKENS
from ccd_anticipation.errors import ConfigError, InputError, VersionError
from ccd_anticipation.table import Table
from ccd_anticipation.vocab import EOS, PAD

logger = logging.getLogger(__name__)


class Predictor(Protocol):
    """Anything that can anticipate next steps for a batch."""

    modality: str
    vocab_hash: str

    def anticipate(self, batch):
        """list (per sample) of lists (per step t = 1..T) of generated token-id lists"""


class CopyGroundTruthPredictor(object):
    """
    Oracle that returns the ground-truth step text. Scores 1.0 under any BLEU order, which
    checks the evaluation pipeline end to end.

    `Args:`
        vocab_hash: str
        modality: str
    """

    def __init__(self, vocab_hash, modality='visual'):
        self.vocab_hash = vocab_hash
        self.modality = modality

    def anticipate(self, batch):
        results = []
        for row in range(batch.size):
            steps = []
            for t in range(batch.n_steps):
                if not batch.step_mask[row, t]:
                    continue
                steps.append([int(tok) for tok in batch.targets[row, t] if tok not in (PAD, EOS)])
            results.append(steps)
        return results


@dataclass
class EvalReport:
    """
    Scores of one predictor on one corpus split.

    `Args:`
        bleu1: float
        bleu4: float
        per_step_bleu1: list of float, index i holds target step i + 1
        per_step_bleu4: list of float
        per_step_count: list of int, scored steps per index
        repetition_rate: float
            Share of consecutive generated steps within a sample that are identical
        samples: list of dict
            ``{id, ingredients, step, reference, generated}`` with texts as words
        provenance: dict
    """

    bleu1: float
    bleu4: float
    per_step_bleu1: list
    per_step_bleu4: list
    per_step_count: list
    repetition_rate: float
    samples: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def max_step(self):
        return len(self.per_step_bleu1)

    def per_step_table(self, method=None):
        rows = []
        for i, (b1, b4, n) in enumerate(zip(self.per_step_bleu1, self.per_step_bleu4,
                                            self.per_step_count), start=1):
            row = {'method': method} if method is not None else {}
            row.update({'step': i, 'n': n, 'bleu1': b1, 'bleu4': b4})
            rows.append(row)
        return Table(rows)


def repetition_rate(generated):
    """
    `Args:`
        generated: list (per sample) of lists (per step) of token lists
    `Returns:`
        float
    """

    pairs = repeats = 0
    for steps in generated:
        for previous, current in zip(steps, steps[1:]):
            pairs += 1
            repeats += list(previous) == list(current)
    return repeats / pairs if pairs else 0.0


def evaluate_next_step(predictor, corpus, split='test', vocab=None, batch_size=16,
                       n_ingredients=None):
    """
    Run the next-step protocol.

    `Args:`
        predictor: Predictor
            A trained ``AnticipationModel`` or ``CopyGroundTruthPredictor``
        corpus: CorpusSplit
        split: str
        vocab: Vocab
            The predictor's vocabulary; required to re-encode the corpus
        batch_size: int
        n_ingredients: int
            Defaults to the model config or the corpus grammar
    `Returns:`
        `EvalReport`
    """

    if predictor.modality not in corpus.modalities:
        raise ConfigError(f'{predictor.modality} predictor cannot be evaluated on a corpus '
                          f'carrying {list(corpus.modalities)}')
    if vocab is None:
        raise InputError('evaluate_next_step needs the predictor vocabulary')
    if predictor.vocab_hash != vocab.hash():
        raise VersionError('predictor was built for a different vocabulary')

    samples = corpus.split(split)
    if not samples:
        raise InputError(f'split {split} holds no samples')

    config = getattr(predictor, 'config', None)
    max_tokens = config.max_tokens if config is not None else MAX_CONTENT_TOKENS
    if n_ingredients is None:
        n_ingredients = config.n_ingredients if config is not None \
            else corpus.grammar.get('n_ingredients')
    encoded = encode_samples(samples, corpus.vocab, vocab, max_tokens)

    was_training = getattr(predictor, 'training', False)
    if was_training:
        predictor.eval()
    try:
        generated = []
        for batch in iterate_batches(encoded, batch_size, n_ingredients, max_tokens):
            generated.extend(predictor.anticipate(batch))
    finally:
        if was_training:
            predictor.train()

    max_step = max(s.n_steps for s in encoded)
    step_candidates = [[] for _ in range(max_step)]
    step_references = [[] for _ in range(max_step)]
    candidates, references, dump = [], [], []

    for sample, source, steps in zip(encoded, samples, generated):
        for t, (text, tokens) in enumerate(zip(sample.texts, steps)):
            reference = [tok for tok in text if tok != EOS]
            candidates.append(tokens)
            references.append(reference)
            step_candidates[t].append(tokens)
            step_references[t].append(reference)
            dump.append({'id': sample.id, 'ingredients': list(source.ingredients), 'step': t + 1,
                         'reference': ' '.join(vocab.decode(reference)),
                         'generated': ' '.join(vocab.decode(tokens))})

    bleu1, bleu4 = bleu_1_4(candidates, references)
    per_step = [bleu_1_4(c, r) if c else (0.0, 0.0)
                for c, r in zip(step_candidates, step_references)]
    for t, c in enumerate(step_candidates, start=1):
        if not c:
            logger.warning(f'split {split} has no samples with a step {t}')

    report = EvalReport(
        bleu1=bleu1,
        bleu4=bleu4,
        per_step_bleu1=[p[0] for p in per_step],
        per_step_bleu4=[p[1] for p in per_step],
        per_step_count=[len(c) for c in step_candidates],
        repetition_rate=repetition_rate(generated),
        samples=dump,
        provenance=dict(getattr(predictor, 'provenance', {}) or {}),
    )
    logger.info(f'{predictor.modality} predictor on {split}: BLEU1={bleu1 * 100:.2f} '
                f'BLEU4={bleu4 * 100:.2f} over {len(candidates)} steps')
    return report
