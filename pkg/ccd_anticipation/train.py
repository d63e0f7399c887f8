"""
Training loops for the three roles: teacher pretraining on the large text corpus, teacher
fine-tuning on the target corpus, and student training with or without distillation.
"""

from __future__ import annotations

import copy
import logging
import math
import random
import time
from dataclasses import dataclass

import numpy as np
import simplejson as json
import torch
import torch.nn as nn

from ccd_anticipation import files
from ccd_anticipation.batching import encode_samples, iterate_batches
from ccd_anticipation.distill import DistillConfig, TapProjector, combined_loss, \
    distillation_term
from ccd_anticipation.errors import AlignmentError, ConfigError, DataError, NumericError, \
    VersionError
from ccd_anticipation.evaluate import evaluate_next_step
from ccd_anticipation.model import build_model, caption_loss
from ccd_anticipation.table import Table
from ccd_anticipation.vocab import unk_rate

logger = logging.getLogger(__name__)

ROLES = ('teacher_pretrain', 'teacher_finetune', 'student')


@dataclass
class TrainConfig:
    """
    `Args:`
        lr: float
        betas: tuple
            Adam moment coefficients
        eps: float
        batch_size: int
        pretrain_epochs: int
        finetune_epochs: int
        student_epochs: int
        seed: int
        grad_clip: float
            Gradient norm clip; 0 disables clipping
        eval_batch_size: int
        eval_every: int
            Validate every this many epochs (and after the last); 0 turns validation and
            best-epoch selection off
    """

    lr: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 16
    pretrain_epochs: int = 20
    finetune_epochs: int = 40
    student_epochs: int = 40
    seed: int = 0
    grad_clip: float = 1.0
    eval_batch_size: int = 32
    eval_every: int = 1

    def __post_init__(self):
        self.betas = tuple(self.betas)

    def validate(self):
        if self.lr <= 0:
            raise ConfigError('lr must be positive')
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError('batch sizes must be at least 1')
        if min(self.pretrain_epochs, self.finetune_epochs, self.student_epochs) < 1:
            raise ConfigError('epoch counts must be at least 1')
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ConfigError('betas must be two values in [0, 1)')
        if self.grad_clip < 0 or self.eval_every < 0:
            raise ConfigError('grad_clip and eval_every must be non-negative')
        return self

    def to_dict(self):
        return {'lr': self.lr, 'betas': list(self.betas), 'eps': self.eps,
                'batch_size': self.batch_size, 'pretrain_epochs': self.pretrain_epochs,
                'finetune_epochs': self.finetune_epochs, 'student_epochs': self.student_epochs,
                'seed': self.seed, 'grad_clip': self.grad_clip,
                'eval_batch_size': self.eval_batch_size, 'eval_every': self.eval_every}


class TrainLog(Table):
    """
    One row per epoch: ``epoch, role, seed, loss_cap, loss_distill, weight, loss, val_bleu1,
    val_bleu4, wall_time``. Carries the config snapshot and the selected epoch.

    Saved as line-delimited JSON: a header line ``{"config", "best_epoch"}`` followed by the rows.
    """

    def __init__(self, lst=None, config=None, best_epoch=None):
        super().__init__(lst)
        self.config = config or {}
        self.best_epoch = best_epoch

    def losses(self):
        return self.column_data('loss')

    def save(self, path):
        with files.open_text(path, 'w') as f:
            json.dump({'config': self.config, 'best_epoch': self.best_epoch}, f, sort_keys=True)
            f.write('\n')
            for row in self:
                json.dump(row, f, sort_keys=True)
                f.write('\n')
        return str(path)

    @classmethod
    def load(cls, path):
        with files.open_text(path, 'r') as f:
            lines = [line for line in f if line.strip()]
        if not lines:
            raise DataError(f'Training log {path} is empty')
        header = json.loads(lines[0])
        return cls([json.loads(line) for line in lines[1:]], config=header.get('config'),
                   best_epoch=header.get('best_epoch'))


@dataclass
class TrainResult:
    model: nn.Module
    log: TrainLog
    projector: nn.Module = None


def set_seed(seed):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def corpus_ingredients(corpus):
    """Ingredient inventory size of a corpus (grammar setting, else the largest id seen + 1)."""
    if corpus.grammar.get('n_ingredients'):
        return int(corpus.grammar['n_ingredients'])
    return max(i for s in corpus.samples for i in s.ingredients) + 1


def _check_steps(model, corpus):
    if corpus.max_steps > model.config.max_steps:
        raise ConfigError(f'corpus has procedures of {corpus.max_steps} steps but max_steps is '
                          f'{model.config.max_steps}')


def fit(model, train_samples, epochs, train_cfg, batch_loss, params=None, validate=None,
        role='student', config_snapshot=None, companions=()):
    """
    The shared training loop.

    `Args:`
        model: AnticipationModel
            Trained in place; left in eval mode holding the selected epoch's weights
        train_samples: list of EncodedSample
        epochs: int
        train_cfg: TrainConfig
        batch_loss: callable
            ``batch -> (loss_cap, loss_distill, weight)``
        params: list
            Parameters to optimize; defaults to ``model.parameters()``
        validate: callable
            ``model -> (bleu1, bleu4)`` on the validation split, or None. The selected epoch
            has the highest BLEU4, then BLEU1; remaining ties go to the later epoch.
        role: str
        config_snapshot: dict
        companions: tuple of nn.Module
            Modules trained alongside the model (the tap projector); restored to the same
            selected epoch
    `Returns:`
        `TrainLog`
    """

    modules = [model] + [m for m in companions if m is not None]
    params = list(model.parameters()) if params is None else list(params)
    optimizer = torch.optim.Adam(params, lr=train_cfg.lr, betas=train_cfg.betas,
                                 eps=train_cfg.eps)
    rng = np.random.default_rng(train_cfg.seed)
    cfg = model.config

    rows = []
    best_epoch, best_score, best_state = None, (-math.inf, -math.inf), None

    for epoch in range(1, epochs + 1):
        model.train()
        start = time.perf_counter()
        totals = {'loss_cap': 0.0, 'loss_distill': 0.0, 'loss': 0.0}
        n_batches = 0
        weight = 0.0

        batches = iterate_batches(train_samples, train_cfg.batch_size, cfg.n_ingredients,
                                  cfg.max_tokens, rng)
        for index, batch in enumerate(batches):
            cap, distill, weight = batch_loss(batch)
            try:
                loss = combined_loss(cap, distill, weight)
            except NumericError:
                raise NumericError('non-finite loss', {
                    'role': role, 'epoch': epoch, 'batch': index,
                    'sample_ids': batch.sample_ids, 'loss_cap': float(cap),
                    'loss_distill': float(distill)})

            optimizer.zero_grad()
            loss.backward()
            if train_cfg.grad_clip:
                nn.utils.clip_grad_norm_(params, train_cfg.grad_clip)
            optimizer.step()

            totals['loss_cap'] += float(cap)
            totals['loss_distill'] += float(distill)
            totals['loss'] += float(loss)
            n_batches += 1
            logger.debug(f'{role} epoch {epoch} batch {index}: cap={float(cap):.4f} '
                         f'distill={float(distill):.4f}')

        row = {'epoch': epoch, 'role': role, 'seed': train_cfg.seed}
        row.update({k: v / n_batches for k, v in totals.items()})
        row['weight'] = float(weight)
        row['val_bleu1'] = row['val_bleu4'] = None

        due = train_cfg.eval_every and (epoch % train_cfg.eval_every == 0 or epoch == epochs)
        if validate is not None and due:
            model.eval()
            row['val_bleu1'], row['val_bleu4'] = validate(model)
            score = (row['val_bleu4'], row['val_bleu1'])
            if score >= best_score:
                best_epoch, best_score = epoch, score
                best_state = [copy.deepcopy(m.state_dict()) for m in modules]

        row['wall_time'] = time.perf_counter() - start
        rows.append(row)
        logger.info(f'{role} epoch {epoch}/{epochs}: loss={row["loss"]:.4f} '
                    f'(cap {row["loss_cap"]:.4f}, distill {row["loss_distill"]:.4f})'
                    + (f' val BLEU4={row["val_bleu4"] * 100:.2f}'
                       if row['val_bleu4'] is not None else ''))

    if best_state is not None:
        for module, state in zip(modules, best_state):
            module.load_state_dict(state)
        logger.info(f'{role}: keeping epoch {best_epoch} (val BLEU4={best_score[0] * 100:.2f})')
    else:
        best_epoch = epochs
    model.eval()

    return TrainLog(rows, config=config_snapshot, best_epoch=best_epoch)


def _validator(corpus, vocab, train_cfg):
    if not corpus.val:
        return None

    def validate(model):
        report = evaluate_next_step(model, corpus, 'val', vocab, train_cfg.eval_batch_size)
        return report.bleu1, report.bleu4

    return validate


def _caption_only(model):
    def batch_loss(batch):
        trace = model(batch)
        cap = caption_loss(trace.logits, trace.targets)
        return cap, cap.new_zeros(()), 0.0
    return batch_loss


def _snapshot(role, model, train_cfg, distill_cfg=None, extra=None):
    snapshot = {'role': role, 'model': model.config.to_dict(), 'train': train_cfg.to_dict(),
                'vocab_hash': model.vocab_hash}
    if distill_cfg is not None:
        snapshot['distill'] = distill_cfg.to_dict()
    snapshot.update(extra or {})
    return snapshot


def pretrain_teacher(corpus, vocab, model_cfg, train_cfg):
    """
    Train a text model from scratch on the pretraining corpus with the caption loss only.

    `Args:`
        corpus: CorpusSplit
            Pretraining corpus; ``vocab`` must have been built from its train split
        vocab: Vocab
        model_cfg: ModelConfig
        train_cfg: TrainConfig
    `Returns:`
        `TrainResult`
    """

    train_cfg.validate()
    if 'text' not in corpus.modalities:
        raise DataError('teacher pretraining needs a corpus with step texts')
    train_words = [corpus.vocab.decode(step.text) for s in corpus.train for step in s.steps]
    if unk_rate(train_words, vocab) > 0:
        raise DataError('vocabulary does not cover the pretraining corpus; build it from this '
                        'corpus')

    set_seed(train_cfg.seed)
    model = build_model(model_cfg, vocab, corpus_ingredients(corpus), 'text')
    _check_steps(model, corpus)
    samples = encode_samples(corpus.train, corpus.vocab, vocab, model.config.max_tokens)

    log = fit(model, samples, train_cfg.pretrain_epochs, train_cfg, _caption_only(model),
              validate=_validator(corpus, vocab, train_cfg), role='teacher_pretrain',
              config_snapshot=_snapshot('teacher_pretrain', model, train_cfg,
                                        extra={'corpus_seed': corpus.seed}))
    model.provenance = log.config
    return TrainResult(model=model, log=log)


def train_text_teacher(corpus, vocab, model_cfg, train_cfg):
    """A text model trained on the target corpus only (no pretraining), for the
    finetune epoch count."""

    train_cfg.validate()
    set_seed(train_cfg.seed)
    model = build_model(model_cfg, vocab, corpus_ingredients(corpus), 'text')
    _check_steps(model, corpus)
    samples = encode_samples(corpus.train, corpus.vocab, vocab, model.config.max_tokens)

    log = fit(model, samples, train_cfg.finetune_epochs, train_cfg, _caption_only(model),
              validate=_validator(corpus, vocab, train_cfg), role='teacher_target_only',
              config_snapshot=_snapshot('teacher_target_only', model, train_cfg,
                                        extra={'corpus_seed': corpus.seed}))
    model.provenance = log.config
    return TrainResult(model=model, log=log)


def finetune_teacher(teacher, corpus, vocab, train_cfg):
    """
    Fine-tune a pretrained text model on the target corpus. The input model is not modified.

    `Args:`
        teacher: AnticipationModel
        corpus: CorpusSplit
        vocab: Vocab
            Must be the vocabulary the teacher was built for
        train_cfg: TrainConfig
    `Returns:`
        `TrainResult`
    """

    train_cfg.validate()
    if teacher.vocab_hash != vocab.hash():
        raise VersionError('teacher checkpoint was built for a different vocabulary')
    if teacher.modality != 'text':
        raise ConfigError('only text models can be fine-tuned as teachers')

    set_seed(train_cfg.seed)
    model = copy.deepcopy(teacher)
    model.requires_grad_(True)
    _check_steps(model, corpus)
    samples = encode_samples(corpus.train, corpus.vocab, vocab, model.config.max_tokens)

    log = fit(model, samples, train_cfg.finetune_epochs, train_cfg, _caption_only(model),
              validate=_validator(corpus, vocab, train_cfg), role='teacher_finetune',
              config_snapshot=_snapshot('teacher_finetune', model, train_cfg,
                                        extra={'corpus_seed': corpus.seed}))
    model.provenance = log.config
    return TrainResult(model=model, log=log)


def _check_teacher(teacher, student, vocab):
    if teacher.modality != 'text':
        raise ConfigError('the distillation teacher must be a text model')
    if teacher.vocab_hash != vocab.hash():
        raise VersionError('teacher was built for a different vocabulary than the student')
    if teacher.config.max_tokens != student.config.max_tokens:
        raise AlignmentError('teacher and student decode different sentence lengths')
    if teacher.config.n_ingredients != student.config.n_ingredients:
        raise AlignmentError('teacher and student use different ingredient inventories')


def train_student(corpus, vocab, model_cfg, distill_cfg, train_cfg, teacher=None):
    """
    Train a frame-feature model, optionally distilling from a frozen text teacher:
    L = L_cap + w * L_distill.

    `Args:`
        corpus: CorpusSplit
            Target corpus carrying both modalities when distilling
        vocab: Vocab
        model_cfg: ModelConfig
        distill_cfg: DistillConfig
        train_cfg: TrainConfig
        teacher: AnticipationModel
            Required unless ``distill_cfg.mode`` is ``none``; never updated
    `Returns:`
        `TrainResult` with the student and its tap projector
    """

    distill_cfg = (distill_cfg or DistillConfig(mode='none', taps=())).validate()
    train_cfg.validate()
    if distill_cfg.active and teacher is None:
        raise ConfigError(f'distill mode {distill_cfg.mode} needs a teacher checkpoint')
    if 'visual' not in corpus.modalities:
        raise DataError('student training needs a corpus with frame features')
    if distill_cfg.active and 'text' not in corpus.modalities:
        raise DataError('distillation needs a corpus with paired step texts')

    set_seed(train_cfg.seed)
    student = build_model(model_cfg, vocab, corpus_ingredients(corpus), 'visual',
                          frame_dim=corpus.frame_dim)
    _check_steps(student, corpus)

    projector = None
    params = list(student.parameters())
    weight = 0.0
    if distill_cfg.active:
        _check_teacher(teacher, student, vocab)
        _check_steps(teacher, corpus)
        teacher.eval()
        teacher.requires_grad_(False)
        weight = distill_cfg.weight
        if distill_cfg.mode != 'logits_kl':
            projector = TapProjector.for_models(student.config, teacher.config, distill_cfg)
            params += list(projector.parameters())

    samples = encode_samples(corpus.train, corpus.vocab, vocab, student.config.max_tokens)

    def batch_loss(batch):
        trace = student(batch)
        cap = caption_loss(trace.logits, trace.targets)
        if not distill_cfg.active:
            return cap, cap.new_zeros(()), 0.0
        with torch.no_grad():
            teacher_trace = teacher(batch)
        distill = distillation_term(distill_cfg, trace, teacher_trace, projector)
        return cap, distill, weight

    extra = {'corpus_seed': corpus.seed,
             'teacher': getattr(teacher, 'provenance', None) if teacher is not None else None}
    log = fit(student, samples, train_cfg.student_epochs, train_cfg, batch_loss, params=params,
              validate=_validator(corpus, vocab, train_cfg), role='student',
              config_snapshot=_snapshot('student', student, train_cfg, distill_cfg, extra),
              companions=(projector,))
    student.provenance = log.config
    return TrainResult(model=student, log=log, projector=projector)
