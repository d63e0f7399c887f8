"""
Experiment harness: text-alone teachers, student methods, tap-position and width ablations.

Every comparison is run once per seed and reported as mean and std over seeds. BLEU values in
the tables are multiplied by 100.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from ccd_anticipation.config import TAP_SUBSETS
from ccd_anticipation.distill import ALL_TAPS
from ccd_anticipation.evaluate import evaluate_next_step
from ccd_anticipation.table import Table
from ccd_anticipation.train import finetune_teacher, pretrain_teacher, train_student, \
    train_text_teacher

logger = logging.getLogger(__name__)

TEACHER_ROWS = (
    (3, 'text-alone (target only)', 'target_only'),
    (4, 'text-alone (pretrain + finetune)', 'pretrained'),
)

STUDENT_ROWS = (
    (8, 'visual-alone', 'none'),
    (9, 'logits KL distillation', 'logits_kl'),
    (10, 'feature L2 distillation', 'feature_l2'),
    (12, 'CCD', 'ccd'),
)

ROW_LABELS = 'abcdefgh'


def seed_stats(values):
    """`Returns:` (mean, population std) of a list of per-seed values."""
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(values.std())


def taps_label(taps):
    return '+'.join(taps) if taps else 'none'


def _score_row(reports):
    b1 = seed_stats([r.bleu1 * 100 for r in reports])
    b4 = seed_stats([r.bleu4 * 100 for r in reports])
    rep = seed_stats([r.repetition_rate for r in reports])
    return {'bleu1_mean': b1[0], 'bleu1_std': b1[1], 'bleu4_mean': b4[0], 'bleu4_std': b4[1],
            'repetition_rate_mean': rep[0], 'n_seeds': len(reports)}


@dataclass
class StudentRun:
    result: object
    report: object


@dataclass
class ExperimentRunner:
    """
    Trains and caches the models an experiment compares. Student runs are keyed by
    (width, mode, taps, seed) so a configuration shared by several tables is trained once.

    `Args:`
        cfg: ExperimentConfig
        pretrain_corpus: CorpusSplit
        target_corpus: CorpusSplit
        vocab: Vocab
            Model vocabulary, built from the pretraining corpus
    """

    cfg: object
    pretrain_corpus: object
    target_corpus: object
    vocab: object
    teachers: dict = field(default_factory=dict)
    teacher_reports: dict = field(default_factory=dict)
    logs: dict = field(default_factory=dict)
    students: dict = field(default_factory=dict)

    @property
    def seeds(self):
        return list(self.cfg.seeds)

    def _train_cfg(self, seed):
        return dataclasses.replace(self.cfg.train, seed=seed)

    def _evaluate(self, model):
        return evaluate_next_step(model, self.target_corpus, 'test', self.vocab,
                                  self.cfg.train.eval_batch_size)

    def teacher(self, seed, kind='pretrained'):
        """
        Text teacher of one seed. ``pretrained`` is pretrained on the large corpus and
        fine-tuned on the target corpus; ``target_only`` is trained on the target corpus alone.
        """

        key = (kind, seed)
        if key in self.teachers:
            return self.teachers[key]

        train_cfg = self._train_cfg(seed)
        if kind == 'pretrained':
            pretrained = pretrain_teacher(self.pretrain_corpus, self.vocab, self.cfg.teacher_model,
                                          train_cfg)
            self.logs[('teacher_pretrain', seed)] = pretrained.log
            result = finetune_teacher(pretrained.model, self.target_corpus, self.vocab, train_cfg)
            self.logs[('teacher_finetune', seed)] = result.log
        else:
            result = train_text_teacher(self.target_corpus, self.vocab, self.cfg.teacher_model,
                                        train_cfg)
            self.logs[('teacher_target_only', seed)] = result.log

        self.teachers[key] = result.model
        self.teacher_reports[key] = self._evaluate(result.model)
        return result.model

    def teacher_report(self, seed, kind='pretrained'):
        self.teacher(seed, kind)
        return self.teacher_reports[(kind, seed)]

    def student(self, seed, mode='none', taps=(), d=None):
        """
        Train (or fetch) one student and its test report.

        `Args:`
            seed: int
            mode: str
                Distillation mode; ``none`` ignores ``taps``
            taps: tuple of str
            d: int
                Student width; defaults to the configured width
        `Returns:`
            `StudentRun`
        """

        d = d or self.cfg.student_model.d
        taps = tuple(taps) if mode != 'none' else ()
        if mode != 'none' and not taps:
            mode = 'none'
        key = (d, mode, taps, seed)
        if key in self.students:
            return self.students[key]

        distill_cfg = dataclasses.replace(self.cfg.distill, mode=mode).with_taps(taps)
        model_cfg = self.cfg.student_model.bind(d=d)
        teacher = self.teacher(seed) if mode != 'none' else None

        logger.info(f'Training student d={d} mode={mode} taps={taps_label(taps)} seed={seed}')
        result = train_student(self.target_corpus, self.vocab, model_cfg, distill_cfg,
                               self._train_cfg(seed), teacher=teacher)
        run = StudentRun(result=result, report=self._evaluate(result.model))
        self.students[key] = run
        self.logs[('student', d, mode, taps_label(taps), seed)] = result.log
        return run

    def method_reports(self, mode, taps=ALL_TAPS, d=None):
        return [self.student(seed, mode, taps, d).report for seed in self.seeds]


def run_teacher_rows(runner):
    rows = []
    for row_id, method, kind in TEACHER_ROWS:
        reports = [runner.teacher_report(seed, kind) for seed in runner.seeds]
        row = {'row': row_id, 'method': method, 'modality': 'text'}
        row.update(_score_row(reports))
        rows.append(row)
    return rows


def run_method_comparison(runner, baselines=('logits_kl', 'feature_l2')):
    """
    Text-alone teachers and student methods side by side: visual-alone, the distillation
    baselines and CCD with every tap active.

    `Returns:`
        `Table`
    """

    rows = run_teacher_rows(runner)
    for row_id, method, mode in STUDENT_ROWS:
        if mode not in ('none', 'ccd') and mode not in baselines:
            continue
        reports = runner.method_reports(mode, runner.cfg.distill.taps)
        row = {'row': row_id, 'method': method, 'modality': 'visual'}
        row.update(_score_row(reports))
        rows.append(row)
        logger.info(f'{method}: BLEU4 {row["bleu4_mean"]:.2f} +- {row["bleu4_std"]:.2f}')
    return Table(rows)


def run_tap_ablation(runner, subsets=TAP_SUBSETS):
    """
    One CCD student per tap subset; the empty subset is the visual-alone student.

    `Args:`
        runner: ExperimentRunner
        subsets: sequence of tap tuples, reported in order as rows (a), (b), ...
    `Returns:`
        `Table`
    """

    rows = []
    for label, taps in zip(ROW_LABELS, subsets):
        mode = 'ccd' if taps else 'none'
        reports = runner.method_reports(mode, taps)
        row = {'row': label, 'taps': taps_label(taps)}
        for kind in ALL_TAPS:
            row[kind] = kind in taps
        row.update(_score_row(reports))
        rows.append(row)
    return Table(rows)


def run_dim_ablation(runner, dims=None):
    """
    Students at two widths, each with and without CCD against the same teacher. A width that
    differs from the teacher's goes through the tap projections.

    `Returns:`
        `Table` with rows (a) to (d)
    """

    dims = list(dims or runner.cfg.ablation.dims)
    teacher_d = runner.cfg.teacher_model.d
    rows = []
    labels = iter(ROW_LABELS)
    for d in dims:
        for mode in ('none', 'ccd'):
            reports = runner.method_reports(mode, runner.cfg.distill.taps, d=d)
            row = {'row': next(labels), 'teacher_d': teacher_d, 'student_d': d,
                   'ccd': mode == 'ccd', 'projected': mode == 'ccd' and d != teacher_d}
            row.update(_score_row(reports))
            rows.append(row)
    return Table(rows)


@dataclass
class ExperimentResults:
    """
    `Args:`
        tables: dict
            name -> `Table`
        reports: dict
            method name -> list of per-seed `EvalReport`
        logs: dict
            run key -> `TrainLog`
    """

    tables: dict
    reports: dict
    logs: dict


def run_experiment(runner):
    """
    Every comparison enabled in the config: method comparison, tap-position and width
    ablations, and the per-step reports of each method.

    `Returns:`
        `ExperimentResults`
    """

    cfg = runner.cfg
    tables = {'methods': run_method_comparison(runner, cfg.ablation.baselines)}
    if cfg.ablation.tap_ablation:
        tables['taps'] = run_tap_ablation(runner)
    if cfg.ablation.dim_ablation:
        tables['dims'] = run_dim_ablation(runner)

    reports = {
        'text-alone (target only)': [runner.teacher_report(s, 'target_only')
                                     for s in runner.seeds],
        'text-alone (pretrain + finetune)': [runner.teacher_report(s) for s in runner.seeds],
    }
    for _, method, mode in STUDENT_ROWS:
        if mode in ('none', 'ccd') or mode in cfg.ablation.baselines:
            reports[method] = runner.method_reports(mode, cfg.distill.taps)

    return ExperimentResults(tables=tables, reports=reports, logs=dict(runner.logs))
