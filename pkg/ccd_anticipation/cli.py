"""
Command-line entry point.

Layout of the output root:

- ``data/``: ``pretrain.jsonl.gz``, ``target.jsonl.gz``, ``vocab.json``
- ``checkpoints/<run>.pt`` and ``logs/<run>.jsonl`` for every ``train`` run
- ``eval/<checkpoint>-<split>/``: report bundle of one ``eval`` run
- ``report/``: the full ``reproduce`` bundle, with training logs under ``report/logs/``

Exit codes: 0 on success, 2 for configuration or usage errors, 1 for any other failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from ccd_anticipation import files
from ccd_anticipation.ablation import ExperimentRunner, run_experiment, taps_label
from ccd_anticipation.check_env import resolve_output_root
from ccd_anticipation.checkpoint import load_checkpoint, save_checkpoint
from ccd_anticipation.config import flatten_config, load_config
from ccd_anticipation.corpus import generate_corpus, load_corpus, save_corpus
from ccd_anticipation.errors import ConfigError, VersionError
from ccd_anticipation.evaluate import CopyGroundTruthPredictor, evaluate_next_step
from ccd_anticipation.report import emit_report
from ccd_anticipation.train import ROLES, finetune_teacher, pretrain_teacher, train_student
from ccd_anticipation.vocab import build_vocab, load_vocab, save_vocab

logger = logging.getLogger(__name__)

DATA_DIR = 'data'
PRETRAIN_CORPUS = 'pretrain.jsonl.gz'
TARGET_CORPUS = 'target.jsonl.gz'
VOCAB_FILE = 'vocab.json'


def build_parser():
    parser = argparse.ArgumentParser(prog='ccd', description='Cross-modal contrastive '
                                     'distillation for next-step anticipation')
    parser.add_argument('--log-level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', required=True, metavar='PATH',
                        help='Experiment config (YAML or JSON)')
    common.add_argument('--out', default=None, metavar='DIR',
                        help='Output root (overrides CCD_OUTPUT_ROOT and output_dir)')
    common.add_argument('--seed', default=None, type=int,
                        help='Override the seeds of the config')

    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('gen-data', parents=[common],
                        help='Generate the pretraining and target corpora and the vocabulary')

    train = commands.add_parser('train', parents=[common], help='Train one model')
    train.add_argument('--role', required=True, choices=ROLES)
    train.add_argument('--teacher', default=None, metavar='PATH',
                       help='Fine-tuned teacher checkpoint (student distillation runs)')
    train.add_argument('--checkpoint', default=None, metavar='PATH',
                       help='Pretrained teacher checkpoint (teacher_finetune)')

    evaluate = commands.add_parser('eval', parents=[common], help='Next-step evaluation')
    evaluate.add_argument('--checkpoint', default=None, metavar='PATH')
    evaluate.add_argument('--split', default='test', choices=['train', 'val', 'test'])
    evaluate.add_argument('--oracle', action='store_true',
                          help='Score the copy-ground-truth predictor instead of a checkpoint')

    commands.add_parser('reproduce', parents=[common],
                        help='Run every comparison and write the full report')
    return parser


def _load_cfg(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _data_paths(root):
    data = os.path.join(root, DATA_DIR)
    return (os.path.join(data, PRETRAIN_CORPUS), os.path.join(data, TARGET_CORPUS),
            os.path.join(data, VOCAB_FILE))


def generate_data(cfg):
    """`Returns:` (pretraining corpus, target corpus, model vocabulary)"""

    pretrain = generate_corpus(cfg.corpus.seed, cfg.corpus.pretrain_samples, cfg.grammar,
                               cfg.noise, with_frames=cfg.corpus.pretrain_with_frames)
    target = generate_corpus(cfg.corpus.target_seed, cfg.corpus.target_samples, cfg.grammar,
                             cfg.noise, with_frames=True)
    return pretrain, target, build_vocab(pretrain)


def _load_data(root):
    paths = _data_paths(root)
    for path in paths:
        if not os.path.exists(path):
            raise ConfigError(f'{path} not found; run gen-data first')
    pretrain_path, target_path, vocab_path = paths
    return load_corpus(pretrain_path), load_corpus(target_path), load_vocab(vocab_path)


def cmd_gen_data(args):
    cfg = _load_cfg(args)
    root = resolve_output_root(args.out, cfg.output_dir)
    files.ensure_directory(os.path.join(root, DATA_DIR))

    pretrain, target, vocab = generate_data(cfg)
    pretrain_path, target_path, vocab_path = _data_paths(root)
    save_corpus(pretrain, pretrain_path)
    save_corpus(target, target_path)
    save_vocab(vocab, vocab_path)
    logger.info(f'Wrote corpora and vocabulary to {os.path.join(root, DATA_DIR)}')


def cmd_train(args):
    cfg = _load_cfg(args)
    root = resolve_output_root(args.out, cfg.output_dir)
    pretrain, target, vocab = _load_data(root)
    seed = cfg.seeds[0]
    train_cfg = dataclasses.replace(cfg.train, seed=seed)

    if args.role == 'teacher_pretrain':
        result = pretrain_teacher(pretrain, vocab, cfg.teacher_model, train_cfg)
        name = f'teacher_pretrain-seed{seed}'
    elif args.role == 'teacher_finetune':
        path = args.checkpoint or os.path.join(root, 'checkpoints',
                                               f'teacher_pretrain-seed{seed}.pt')
        if not os.path.exists(path):
            raise ConfigError(f'Pretrained teacher {path} not found; pass --checkpoint')
        result = finetune_teacher(load_checkpoint(path, vocab), target, vocab, train_cfg)
        name = f'teacher_finetune-seed{seed}'
    else:
        teacher = None
        if cfg.distill.active:
            if not args.teacher:
                raise ConfigError(f'distill mode {cfg.distill.mode} needs --teacher')
            teacher = load_checkpoint(args.teacher, vocab)
        result = train_student(target, vocab, cfg.student_model, cfg.distill, train_cfg,
                               teacher=teacher)
        taps = taps_label(cfg.distill.taps) if cfg.distill.active else 'none'
        name = f'student-{cfg.distill.mode}-{taps}-seed{seed}'

    files.ensure_directory(os.path.join(root, 'checkpoints'))
    files.ensure_directory(os.path.join(root, 'logs'))
    save_checkpoint(result.model, os.path.join(root, 'checkpoints', f'{name}.pt'),
                    provenance=result.log.config)
    result.log.save(os.path.join(root, 'logs', f'{name}.jsonl'))


def cmd_eval(args):
    cfg = _load_cfg(args)
    root = resolve_output_root(args.out, cfg.output_dir)
    _, target, vocab = _load_data(root)

    if args.oracle:
        predictor = CopyGroundTruthPredictor(vocab.hash(), modality='visual')
        name = 'oracle'
    elif args.checkpoint:
        predictor = load_checkpoint(args.checkpoint)
        name = files.extract_file_name(args.checkpoint, include_suffix=False)
    else:
        raise ConfigError('eval needs --checkpoint or --oracle')

    report = evaluate_next_step(predictor, target, args.split, vocab, cfg.train.eval_batch_size)
    provenance = flatten_config(cfg)
    provenance.update(flatten_config({'checkpoint': report.provenance}))
    emit_report({name: [report]}, os.path.join(root, 'eval', f'{name}-{args.split}'),
                provenance=provenance)


def cmd_reproduce(args):
    cfg = _load_cfg(args)
    root = resolve_output_root(args.out, cfg.output_dir)
    report_dir = os.path.join(root, 'report')
    log_dir = os.path.join(report_dir, 'logs')

    pretrain, target, vocab = generate_data(cfg)
    files.ensure_directory(os.path.join(root, DATA_DIR))
    pretrain_path, target_path, vocab_path = _data_paths(root)
    save_corpus(pretrain, pretrain_path)
    save_corpus(target, target_path)
    save_vocab(vocab, vocab_path)

    results = run_experiment(ExperimentRunner(cfg, pretrain, target, vocab))
    emit_report(results.reports, report_dir, tables=results.tables,
                provenance=flatten_config(cfg))

    files.ensure_directory(log_dir)
    for key, log in results.logs.items():
        name = '-'.join(str(part) for part in key)
        log.save(os.path.join(log_dir, f'{name}.jsonl'))


COMMANDS = {
    'gen-data': cmd_gen_data,
    'train': cmd_train,
    'eval': cmd_eval,
    'reproduce': cmd_reproduce,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code

    logging.basicConfig(level=args.log_level,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        COMMANDS[args.command](args)
    except (ConfigError, VersionError) as e:
        logger.error(str(e))
        return 2
    except Exception:
        logger.exception(f'{args.command} failed')
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
